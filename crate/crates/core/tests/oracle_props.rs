use birthday_mix::chain::{LazyChain, RandomStream, StateId};
use birthday_mix::graphs::{self, RegularGraph};
use birthday_mix::oracle;
use birthday_mix::stats::{self, DistributionVector};

fn families(n: usize) -> Vec<RegularGraph> {
    let mut out = vec![
        graphs::complete_graph(n).unwrap(),
        graphs::cycle(n).unwrap(),
    ];
    if n.is_multiple_of(2) && n >= 4 {
        out.push(graphs::glued_cliques(n).unwrap());
        out.push(graphs::random_regular(n, 3, n as u64).unwrap());
    }
    if n.is_power_of_two() {
        out.push(graphs::hypercube(n.trailing_zeros()).unwrap());
    }
    out
}

#[test]
fn every_generator_validates_and_is_doubly_stochastic() {
    for n in [3usize, 4, 6, 8, 16, 100, 128, 256] {
        for g in families(n) {
            g.validate().unwrap();
            let m = oracle::lazy_matrix(&g).unwrap();
            assert!(m.is_doubly_stochastic(), "n={n}");
            assert!(m.asymmetry() <= 1e-15, "n={n}");
        }
    }
}

#[test]
fn glued_32_mixes_over_fifty_times_slower_than_k32() {
    let glued =
        oracle::exact_tau_mix(&oracle::lazy_matrix(&graphs::glued_cliques(32).unwrap()).unwrap())
            .unwrap();
    let complete =
        oracle::exact_tau_mix(&oracle::lazy_matrix(&graphs::complete_graph(32).unwrap()).unwrap())
            .unwrap();
    assert_eq!(complete, 1);
    // Cross-checked against an independent numpy scan.
    assert_eq!(glued, 149);
    assert!(glued > 50 * complete);
}

#[test]
fn tau_fixtures() {
    let m = oracle::lazy_matrix(&graphs::glued_cliques(16).unwrap()).unwrap();
    assert_eq!(
        oracle::exact_tau(&m, 0, oracle::tau_mix_threshold()).unwrap(),
        43
    );
    let s = oracle::spectral_check(&m).unwrap();
    assert!((s.gap - 2.392_599_336_179e-2).abs() < 1e-12);
    assert!(s.gap >= 1.0 / 16f64.powi(4));

    let q6 = oracle::lazy_matrix(&graphs::hypercube(6).unwrap()).unwrap();
    assert_eq!(oracle::exact_tau_mix(&q6).unwrap(), 32);

    let c3 = oracle::lazy_matrix(&graphs::cycle(3).unwrap()).unwrap();
    assert_eq!(oracle::exact_tau_mix(&c3).unwrap(), 1);
}

#[test]
fn evolve_paths_agree_up_to_4096_steps() {
    for g in [
        graphs::glued_cliques(16).unwrap(),
        graphs::cycle(9).unwrap(),
        graphs::hypercube(4).unwrap(),
    ] {
        let m = oracle::lazy_matrix(&g).unwrap();
        let p0 = DistributionVector::point_mass(g.n(), 0);
        let mut stepped = p0.clone();
        let mut t_prev = 0;
        for k in 0..=12 {
            let t = 1u64 << k;
            stepped = oracle::evolve(&stepped, &m, t - t_prev).unwrap();
            t_prev = t;
            let doubled = oracle::evolve_by_squaring(&p0, &m, t).unwrap();
            for (a, b) in stepped.as_slice().iter().zip(doubled.as_slice()) {
                assert!((a - b).abs() <= 1e-10, "t={t}");
            }
        }
    }
}

#[test]
fn l2_deviation_never_increases() {
    for n in [8usize, 16] {
        for g in families(n) {
            let m = oracle::lazy_matrix(&g).unwrap();
            let tau = oracle::exact_tau_mix(&m).unwrap();
            for x in 0..n {
                let trace = oracle::deviation_trace(&m, x, 2 * tau).unwrap();
                assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            }
        }
    }
}

#[test]
fn empirical_walks_match_evolve() {
    for g in [
        graphs::glued_cliques(8).unwrap(),
        graphs::random_regular(12, 3, 5).unwrap(),
    ] {
        let m = oracle::lazy_matrix(&g).unwrap();
        let chain = LazyChain::new(g.as_oracle(StateId(0)).unwrap());
        for t in [3u64, 10] {
            let samples: Vec<StateId> = (0..100_000u64)
                .map(|k| chain.simulate(t, &mut RandomStream::new(t, k)))
                .collect();
            let exact = oracle::evolve(&DistributionVector::point_mass(g.n(), 0), &m, t).unwrap();
            let tv = stats::tv_distance(&stats::empirical(&samples, g.n()), &exact).unwrap();
            assert!(tv <= 0.02, "tv {tv} at t={t}");
        }
    }
}

#[test]
fn spectral_bounds_on_bipartite_graphs_are_tight() {
    // Bipartite walks hit lambda_min = -1 + 2/n exactly after lazification.
    for g in [graphs::cycle(8).unwrap(), graphs::hypercube(4).unwrap()] {
        let n = g.n() as f64;
        let s = oracle::spectral_check(&oracle::lazy_matrix(&g).unwrap()).unwrap();
        assert!((s.min_eigenvalue - (-1.0 + 2.0 / n)).abs() < 1e-12);
    }
}
