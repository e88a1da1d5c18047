//! Exact verification for small chains: dense lazy transition matrices,
//! distribution evolution, L2 mixing times, spectra, and brute-force
//! moments of the collision statistic.
//!
//! Everything here is deterministic double-precision linear algebra, capped
//! at [`MAX_DENSE_STATES`] states.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::graphs::RegularGraph;
use crate::stats::{self, DistributionVector};

pub const MAX_DENSE_STATES: usize = 4096;

/// Largest `n^l` accepted by [`enumerate_collision_moments`].
pub const MAX_ENUMERATION: u64 = 10_000_000;

/// Step limit for the mixing-time scans.
pub const MAX_SCAN_STEPS: u64 = 1 << 24;

const STOCHASTIC_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("{n} states exceeds the dense verifier limit of {MAX_DENSE_STATES}")]
    TooLarge { n: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("enumeration of {n}^{l} outcomes exceeds the cap of {MAX_ENUMERATION}")]
    EnumerationCap { n: usize, l: u32 },
    #[error("distribution from state {start} not within threshold after {steps} steps")]
    NotMixed { start: usize, steps: u64 },
    #[error("start state {start} out of range for n={n}")]
    BadStart { start: usize, n: usize },
    #[error("distribution has {got} entries, chain has {expected} states")]
    SizeMismatch { got: usize, expected: usize },
}

/// Dense row-stochastic matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n..(row + 1) * self.n]
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, OracleError> {
        let n = rows.len();
        if n > MAX_DENSE_STATES {
            return Err(OracleError::TooLarge { n });
        }
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(OracleError::SizeMismatch {
                    got: r.len(),
                    expected: n,
                });
            }
            data.extend(r);
        }
        Ok(Self { n, data })
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    /// Largest deviation of any row sum from 1.
    pub fn row_sum_error(&self) -> f64 {
        (0..self.n)
            .map(|r| (self.row(r).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest deviation of any column sum from 1.
    pub fn column_sum_error(&self) -> f64 {
        (0..self.n)
            .map(|c| ((0..self.n).map(|r| self.get(r, c)).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|P[r][c] - P[c][r]|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for c in r + 1..self.n {
                worst = worst.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        self.data.iter().all(|&x| x >= 0.0)
            && self.row_sum_error() <= STOCHASTIC_TOLERANCE
            && self.column_sum_error() <= STOCHASTIC_TOLERANCE
    }

    /// `p P` for a row vector `p`.
    fn left_multiply(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for (o, &pij) in out.iter_mut().zip(self.row(i)) {
                *o += pi * pij;
            }
        }
        out
    }
}

/// Transition matrix of the walk on `g` with holding probability `1/n`:
/// `P = I/n + (1 - 1/n) W`, with `W` the uniform-neighbor-entry walk.
pub fn lazy_matrix(g: &RegularGraph) -> Result<TransitionMatrix, OracleError> {
    let n = g.n();
    if n > MAX_DENSE_STATES {
        return Err(OracleError::TooLarge { n });
    }
    let hold = 1.0 / n as f64;
    let move_weight = (1.0 - hold) / g.degree() as f64;
    let mut data = vec![0.0; n * n];
    for u in 0..n {
        data[u * n + u] += hold;
        for &v in g.neighbors(u) {
            data[u * n + v as usize] += move_weight;
        }
    }
    Ok(TransitionMatrix { n, data })
}

fn check_len(p: &DistributionVector, m: &TransitionMatrix) -> Result<(), OracleError> {
    if p.len() != m.n() {
        return Err(OracleError::SizeMismatch {
            got: p.len(),
            expected: m.n(),
        });
    }
    Ok(())
}

/// `p0 P^t` by `t` successive vector-matrix products.
pub fn evolve(
    p0: &DistributionVector,
    m: &TransitionMatrix,
    t: u64,
) -> Result<DistributionVector, OracleError> {
    check_len(p0, m)?;
    let mut p = p0.as_slice().to_vec();
    for _ in 0..t {
        p = m.left_multiply(&p);
    }
    Ok(DistributionVector::from_raw(p))
}

/// `p0 P^t` by binary powering of `P`. Independent of [`evolve`]; cost is
/// `O(n^3 log t)` rather than `O(n^2 t)`.
pub fn evolve_by_squaring(
    p0: &DistributionVector,
    m: &TransitionMatrix,
    t: u64,
) -> Result<DistributionVector, OracleError> {
    check_len(p0, m)?;
    let mut power = m.to_dmatrix();
    let mut row = DVector::from_column_slice(p0.as_slice()).transpose();
    let mut rest = t;
    while rest > 0 {
        if rest & 1 == 1 {
            row = &row * &power;
        }
        rest >>= 1;
        if rest > 0 {
            power = &power * &power;
        }
    }
    Ok(DistributionVector::from_raw(row.iter().copied().collect()))
}

/// Squared deviation `||n P^t(x0, .) - 1||^2` at time `t`.
pub fn deviation_squared_at(m: &TransitionMatrix, x0: usize, t: u64) -> Result<f64, OracleError> {
    if x0 >= m.n() {
        return Err(OracleError::BadStart {
            start: x0,
            n: m.n(),
        });
    }
    let p = evolve_by_squaring(&DistributionVector::point_mass(m.n(), x0), m, t)?;
    Ok(stats::l2_deviation_squared(&p))
}

/// Squared deviations from `x0` for `t = 0..=horizon`.
pub fn deviation_trace(
    m: &TransitionMatrix,
    x0: usize,
    horizon: u64,
) -> Result<Vec<f64>, OracleError> {
    if x0 >= m.n() {
        return Err(OracleError::BadStart {
            start: x0,
            n: m.n(),
        });
    }
    let mut p = DistributionVector::point_mass(m.n(), x0).into_vec();
    let mut out = Vec::with_capacity(horizon as usize + 1);
    out.push(stats::l2_deviation_squared(&DistributionVector::from_raw(
        p.clone(),
    )));
    for _ in 0..horizon {
        p = m.left_multiply(&p);
        out.push(stats::l2_deviation_squared(&DistributionVector::from_raw(
            p.clone(),
        )));
    }
    Ok(out)
}

/// Smallest `t` with `||n P^t(x0, .) - 1||^2 <= eps_sq`, by forward scan.
/// The squared deviation of a doubly stochastic chain never increases, so
/// the first crossing is final.
pub fn exact_tau(m: &TransitionMatrix, x0: usize, eps_sq: f64) -> Result<u64, OracleError> {
    if x0 >= m.n() {
        return Err(OracleError::BadStart {
            start: x0,
            n: m.n(),
        });
    }
    let mut p = DistributionVector::point_mass(m.n(), x0).into_vec();
    for t in 0..=MAX_SCAN_STEPS {
        let dev = stats::l2_deviation_squared(&DistributionVector::from_raw(p.clone()));
        if dev <= eps_sq {
            return Ok(t);
        }
        p = m.left_multiply(&p);
    }
    Err(OracleError::NotMixed {
        start: x0,
        steps: MAX_SCAN_STEPS,
    })
}

/// Threshold `(1/e)^2` used for the L2 mixing time.
pub fn tau_mix_threshold() -> f64 {
    (-2.0f64).exp()
}

/// `max_x exact_tau(P, x, e^-2)`.
pub fn exact_tau_mix(m: &TransitionMatrix) -> Result<u64, OracleError> {
    let mut worst = 0;
    for x in 0..m.n() {
        worst = worst.max(exact_tau(m, x, tau_mix_threshold())?);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    /// `1 - lambda_2`.
    pub gap: f64,
    pub second_eigenvalue: f64,
    pub min_eigenvalue: f64,
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

/// Eigen-decomposition of a symmetric transition matrix. For `n = 1` the
/// gap is defined to be 1.
pub fn spectral_check(m: &TransitionMatrix) -> Result<SpectralReport, OracleError> {
    let n = m.n();
    for r in 0..n {
        for c in r + 1..n {
            if (m.get(r, c) - m.get(c, r)).abs() > STOCHASTIC_TOLERANCE {
                return Err(OracleError::NotSymmetric { row: r, col: c });
            }
        }
    }
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(m.to_dmatrix())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let min_eigenvalue = *eigenvalues.last().expect("nonempty");
    let (gap, second_eigenvalue) = if n == 1 {
        (1.0, eigenvalues[0])
    } else {
        (1.0 - eigenvalues[1], eigenvalues[1])
    };
    Ok(SpectralReport {
        gap,
        second_eigenvalue,
        min_eigenvalue,
        eigenvalues,
    })
}

/// Exact mean and variance of the pair-collision count of `l` independent
/// draws from `p`, by enumerating all `n^l` outcomes.
pub fn enumerate_collision_moments(
    p: &DistributionVector,
    l: u32,
) -> Result<(f64, f64), OracleError> {
    let n = p.len();
    let outcomes = (n as u64)
        .checked_pow(l)
        .filter(|&c| c <= MAX_ENUMERATION)
        .ok_or(OracleError::EnumerationCap { n, l })?;
    let probs = p.as_slice();
    let l = l as usize;

    // (weight, z) per outcome; outcomes are visited in odometer order.
    let mut cells = Vec::with_capacity(outcomes as usize);
    let mut digits = vec![0usize; l];
    for _ in 0..outcomes {
        let weight: f64 = digits.iter().map(|&d| probs[d]).product();
        let mut z = 0u32;
        for j in 0..l {
            for k in j + 1..l {
                if digits[j] == digits[k] {
                    z += 1;
                }
            }
        }
        cells.push((weight, f64::from(z)));
        for d in digits.iter_mut() {
            *d += 1;
            if *d < n {
                break;
            }
            *d = 0;
        }
    }
    let mean: f64 = cells.iter().map(|(w, z)| w * z).sum();
    let var: f64 = cells.iter().map(|(w, z)| w * (z - mean) * (z - mean)).sum();
    Ok((mean, var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{complete_graph, cycle, glued_cliques, hypercube};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn lazy_k4_is_uniform_rows() {
        let m = lazy_matrix(&complete_graph(4).unwrap()).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert!(close(m.get(r, c), 0.25, 1e-15));
            }
        }
    }

    #[test]
    fn singleton_matrix() {
        let m = lazy_matrix(&RegularGraph::singleton()).unwrap();
        assert_eq!(m.row(0), &[1.0]);
        assert_eq!(exact_tau(&m, 0, 1e-9).unwrap(), 0);
        assert_eq!(exact_tau_mix(&m).unwrap(), 0);
        let s = spectral_check(&m).unwrap();
        assert_eq!((s.gap, s.min_eigenvalue), (1.0, 1.0));
    }

    #[test]
    fn lazy_triangle_rows() {
        let m = lazy_matrix(&cycle(3).unwrap()).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert!(close(m.get(r, c), 1.0 / 3.0, 1e-15));
            }
        }
        assert_eq!(exact_tau_mix(&m).unwrap(), 1);
    }

    #[test]
    fn evolve_examples() {
        let m = lazy_matrix(&complete_graph(4).unwrap()).unwrap();
        let p0 = DistributionVector::point_mass(4, 2);
        assert_eq!(evolve(&p0, &m, 0).unwrap(), p0);
        let p1 = evolve(&p0, &m, 1).unwrap();
        assert!(p1.as_slice().iter().all(|&x| close(x, 0.25, 1e-15)));

        let g = glued_cliques(8).unwrap();
        let m = lazy_matrix(&g).unwrap();
        let p0 = DistributionVector::point_mass(8, 0);
        let a = evolve(&p0, &m, 4).unwrap();
        let b = evolve_by_squaring(&p0, &m, 4).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!(close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn evolve_rejects_wrong_size() {
        let m = lazy_matrix(&complete_graph(4).unwrap()).unwrap();
        assert!(evolve(&DistributionVector::uniform(3), &m, 1).is_err());
        assert!(exact_tau(&m, 4, 0.1).is_err());
    }

    #[test]
    fn complete_graph_mixes_in_one_step() {
        for n in [2, 5, 16, 32] {
            let m = lazy_matrix(&complete_graph(n).unwrap()).unwrap();
            assert_eq!(exact_tau(&m, 0, 1e-6).unwrap(), 1);
            assert_eq!(exact_tau_mix(&m).unwrap(), 1);
        }
    }

    #[test]
    fn k4_spectrum() {
        let m = lazy_matrix(&complete_graph(4).unwrap()).unwrap();
        let s = spectral_check(&m).unwrap();
        assert!(close(s.eigenvalues[0], 1.0, 1e-12));
        for &e in &s.eigenvalues[1..] {
            assert!(close(e, 0.0, 1e-12));
        }
        assert!(close(s.gap, 1.0, 1e-12));
        assert!(close(s.min_eigenvalue, 0.0, 1e-12));
    }

    #[test]
    fn hypercube_spectrum_matches_closed_form() {
        // Walk eigenvalues on Q_d are 1 - 2k/d; lazify with hold 1/n.
        let d = 3;
        let n = 8.0;
        let m = lazy_matrix(&hypercube(d).unwrap()).unwrap();
        let s = spectral_check(&m).unwrap();
        let lam = |w: f64| 1.0 / n + (1.0 - 1.0 / n) * w;
        assert!(close(s.second_eigenvalue, lam(1.0 / 3.0), 1e-12));
        assert!(close(s.min_eigenvalue, lam(-1.0), 1e-12));
        assert!(close(s.min_eigenvalue, -1.0 + 2.0 / n, 1e-12));
    }

    #[test]
    fn rejects_asymmetric() {
        let m = TransitionMatrix::from_rows(vec![vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            spectral_check(&m),
            Err(OracleError::NotSymmetric { .. })
        ));
        assert!(!m.is_doubly_stochastic());
    }

    #[test]
    fn reducible_chain_reports_not_mixed() {
        let m = TransitionMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            exact_tau(&m, 0, 0.1),
            Err(OracleError::NotMixed { .. })
        ));
    }

    #[test]
    fn enumeration_examples() {
        let half = DistributionVector::new(vec![0.5, 0.5]).unwrap();
        let (mean, var) = enumerate_collision_moments(&half, 2).unwrap();
        assert!(close(mean, 0.5, 1e-15) && close(var, 0.25, 1e-15));

        let point = DistributionVector::point_mass(3, 1);
        let (mean, var) = enumerate_collision_moments(&point, 3).unwrap();
        assert!(close(mean, 3.0, 1e-15) && close(var, 0.0, 1e-15));

        let p = DistributionVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let (mean, var) = enumerate_collision_moments(&p, 4).unwrap();
        assert!(close(mean, stats::expected_z(&p, 4), 1e-12));
        assert!(var <= stats::variance_bound(mean, 3, 4));

        assert!(matches!(
            enumerate_collision_moments(&DistributionVector::uniform(4), 20),
            Err(OracleError::EnumerationCap { .. })
        ));
    }

    #[test]
    fn glued_cliques_tau_fixture() {
        let m = lazy_matrix(&glued_cliques(16).unwrap()).unwrap();
        let tau = exact_tau(&m, 0, tau_mix_threshold()).unwrap();
        let s = spectral_check(&m).unwrap();
        assert!(s.gap >= 1.0 / 16f64.powi(4));
        // Scan and the squared deviation at the answer agree.
        assert!(deviation_squared_at(&m, 0, tau).unwrap() <= tau_mix_threshold());
        assert!(deviation_squared_at(&m, 0, tau - 1).unwrap() > tau_mix_threshold());
    }
}
