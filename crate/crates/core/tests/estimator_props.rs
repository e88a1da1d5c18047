use birthday_mix::chain::{IidUniform, LazyChain, StateId};
use birthday_mix::estimator::{
    derive_params, horizon, run_experiment, run_stage, sample_many, sample_stationary,
};
use birthday_mix::graphs;
use birthday_mix::oracle;
use birthday_mix::stats;

fn log_grid() -> Vec<u64> {
    let mut g: Vec<u64> = (0..=48)
        .map(|k| 10f64.powf(f64::from(k) / 8.0).round() as u64)
        .filter(|&n| n >= 2)
        .collect();
    g.insert(0, 2);
    g.dedup();
    g
}

#[test]
fn copy_count_satisfies_b1() {
    for n in log_grid() {
        for eps in [0.05, 0.1, 0.25, 0.5, 1.0] {
            let p = derive_params(n, eps, 1.0).unwrap();
            let lhs = (p.l as f64 - 1.0).powi(2) / (2.0 * n as f64);
            assert!(lhs >= 512.0 / (p.delta * p.delta), "n={n} eps={eps}");
        }
    }
}

#[test]
fn cap_horizon_covers_a_n() {
    for n in log_grid() {
        for eps in [0.05, 0.1, 0.25, 0.5, 1.0] {
            let p = derive_params(n, eps, 1.0).unwrap();
            assert!(2f64.powi(p.i_max as i32) >= p.a_n);
            assert!(2f64.powi(p.i_max as i32 - 1) < p.a_n);
        }
        let p = derive_params(n, 1.0, 1.0).unwrap();
        let nf = n as f64;
        assert!(p.a_n >= nf.powi(4) * (2.0 * nf / p.delta).ln() * (1.0 - 1e-15));
    }
}

#[test]
fn k16_experiments_succeed_at_least_three_quarters() {
    let g = graphs::complete_graph(16).unwrap();
    let chain = LazyChain::new(g.as_oracle(StateId(0)).unwrap());
    let params = derive_params(16, 1.0, 1.0).unwrap();
    let trials = 1000u64;
    let successes = (0..trials)
        .filter(|&e| run_experiment(&chain, 1, e, &params, 2024).success() == Some(true))
        .count() as f64;
    assert!(successes / trials as f64 >= 0.75, "{successes}/{trials}");
}

#[test]
fn iid_uniform_mean_z_matches_birthday_rate() {
    let chain = LazyChain::new(IidUniform::new(16, StateId(0)));
    let params = derive_params(16, 1.0, 1.0).unwrap();
    assert_eq!(params.l, 2049);
    let runs = 300u64;
    let z: Vec<f64> = (0..runs)
        .map(|e| run_experiment(&chain, 1, e, &params, 31).z as f64)
        .collect();
    let mean = z.iter().sum::<f64>() / runs as f64;
    let expected = stats::pairs(2049) as f64 / 16.0;
    assert_eq!(expected, 131_136.0);
    let bound = stats::variance_bound(expected, 16, 2049);
    assert!(
        (mean - expected).abs() <= 3.0 * (bound / runs as f64).sqrt(),
        "mean {mean}"
    );
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
    assert!(var <= bound);
}

#[test]
fn k16_first_stage_stops() {
    // Stop probability is at least 1 - exp(-m/8) ≈ 1 - 2e-6 per stage.
    let g = graphs::complete_graph(16).unwrap();
    let chain = LazyChain::new(g.as_oracle(StateId(0)).unwrap());
    let params = derive_params(16, 1.0, 1.0).unwrap();
    let stops = (0..40)
        .filter(|&seed| run_stage(&chain, 1, &params, seed).stop)
        .count();
    assert_eq!(stops, 40);
}

#[test]
fn k16_full_constants_pick_first_stage() {
    let g = graphs::complete_graph(16).unwrap();
    let m = oracle::lazy_matrix(&g).unwrap();
    assert!(oracle::deviation_squared_at(&m, 0, 2).unwrap() < 1e-20);
    for seed in 0..5 {
        let r = sample_stationary(g.as_oracle(StateId(0)).unwrap(), 1.0, 1.0, seed).unwrap();
        assert_eq!(r.i_final, 1);
        assert!(!r.capped);
        assert_eq!(r.samples.len(), 1);
    }
}

#[test]
fn sample_many_k1_equals_sample_stationary() {
    let g = graphs::cycle(9).unwrap();
    let a = sample_stationary(g.as_oracle(StateId(2)).unwrap(), 0.5, 0.01, 8).unwrap();
    let b = sample_many(g.as_oracle(StateId(2)).unwrap(), 0.5, 1, 0.01, 8).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sqrt_n_samples_cost_little_extra() {
    let g = graphs::complete_graph(16).unwrap();
    let one = sample_many(g.as_oracle(StateId(0)).unwrap(), 1.0, 1, 1.0, 4).unwrap();
    let four = sample_many(g.as_oracle(StateId(0)).unwrap(), 1.0, 4, 1.0, 4).unwrap();
    assert_eq!(four.estimation_steps, one.estimation_steps);
    assert_eq!(four.sampling_steps, 4 * four.horizon);
    assert!(four.sampling_steps * 1000 < four.estimation_steps);
}

#[test]
fn k16_hundred_samples_pass_chi_square() {
    // 0.99 quantile of chi-square with 15 degrees of freedom.
    const CRITICAL: f64 = 30.577_914_166_892_49;
    let g = graphs::complete_graph(16).unwrap();
    let mut counts = [0u64; 16];
    for seed in 0..50 {
        let r = sample_many(g.as_oracle(StateId(0)).unwrap(), 1.0, 100, 0.05, seed).unwrap();
        assert_eq!(r.i_final, 1);
        for s in r.samples {
            counts[s.index()] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / 16.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    assert!(chi2 < CRITICAL, "chi2 {chi2} counts {counts:?}");
}

#[test]
fn guarantee_audit_on_small_graphs() {
    for (g, eps, scale) in [
        (graphs::hypercube(3).unwrap(), 1.0, 0.05),
        (graphs::glued_cliques(8).unwrap(), 1.0, 0.1),
        (graphs::cycle(7).unwrap(), 1.0, 0.05),
    ] {
        let m = oracle::lazy_matrix(&g).unwrap();
        for seed in 0..5 {
            let r = sample_stationary(g.as_oracle(StateId(0)).unwrap(), eps, scale, seed).unwrap();
            let dev2 = oracle::deviation_squared_at(&m, 0, r.horizon).unwrap();
            assert!(dev2.is_finite());
            assert_eq!(r.horizon, horizon(r.i_final));
            let expected: u64 = r
                .stages
                .iter()
                .map(|s| r.params.m * r.params.l * s.horizon)
                .sum();
            assert_eq!(r.estimation_steps, expected);
        }
    }
}

#[test]
fn results_are_reproducible_from_seed() {
    let g = graphs::glued_cliques(16).unwrap();
    let a = sample_many(g.as_oracle(StateId(0)).unwrap(), 1.0, 3, 0.05, 77).unwrap();
    let b = sample_many(g.as_oracle(StateId(0)).unwrap(), 1.0, 3, 0.05, 77).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}
