//! The collision statistic and the distribution quantities around it.
//!
//! For `l` independent draws from `p`, the number of coinciding unordered
//! pairs `Z` has mean `C(l,2) * sum p_x^2`. Writing the squared weighted L2
//! deviation `||n p - 1||^2 = (1/n) sum (n p_x - 1)^2`, that mean becomes
//! `C(l,2) / n * (1 + ||n p - 1||^2)`, so an excess of collisions over the
//! uniform baseline measures distance from stationarity.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::Serialize;
use thiserror::Error;

use crate::chain::StateId;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("distribution sizes differ: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
}

/// Probability vector over `n` states.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DistributionVector(Vec<f64>);

const MASS_TOLERANCE: f64 = 1e-12;

impl DistributionVector {
    pub fn new(p: Vec<f64>) -> Result<Self, StatsError> {
        if p.is_empty() {
            return Err(StatsError::Domain("empty distribution".into()));
        }
        if let Some(bad) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(StatsError::Domain(format!("invalid probability {bad}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(StatsError::Domain(format!("mass sums to {total}, not 1")));
        }
        Ok(Self(p))
    }

    /// Normalizes nonnegative weights with positive total.
    pub fn from_weights(w: Vec<f64>) -> Result<Self, StatsError> {
        let total: f64 = w.iter().sum();
        if total.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || w.iter().any(|x| !x.is_finite() || *x < 0.0)
        {
            return Err(StatsError::Domain(
                "weights must be nonnegative with positive sum".into(),
            ));
        }
        Self::new(w.into_iter().map(|x| x / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        Self(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, x: usize) -> Self {
        assert!(x < n);
        let mut p = vec![0.0; n];
        p[x] = 1.0;
        Self(p)
    }

    /// Wraps a vector without the mass check. For the oracle's internal
    /// products, whose rounding drift is far below any tolerance used here.
    pub(crate) fn from_raw(p: Vec<f64>) -> Self {
        Self(p)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.0.iter().map(|p| p * p).sum()
    }

    pub fn sum_of_cubes(&self) -> f64 {
        self.0.iter().map(|p| p * p * p).sum()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

/// `C(l, 2)` as an exact integer.
pub fn pairs(l: u64) -> u128 {
    let l = u128::from(l);
    l * l.saturating_sub(1) / 2
}

/// The cut-off `(1 + delta/2) * C(l,2) / n`, held exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessThreshold {
    exact: BigRational,
    value: f64,
}

impl SuccessThreshold {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn exact(&self) -> &BigRational {
        &self.exact
    }

    /// `z <= threshold`, decided without rounding.
    pub fn admits(&self, z: u64) -> bool {
        BigRational::from_integer(BigInt::from(z)) <= self.exact
    }
}

pub fn success_threshold(l: u64, n: u64, delta: f64) -> Result<SuccessThreshold, StatsError> {
    if l < 2 {
        return Err(StatsError::Domain(format!("need l >= 2, got {l}")));
    }
    if n < 1 {
        return Err(StatsError::Domain("need n >= 1".into()));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(StatsError::Domain(format!(
            "need 0 < delta <= 1, got {delta}"
        )));
    }
    let delta = BigRational::from_float(delta).expect("finite delta");
    let one = BigRational::from_integer(1.into());
    let two = BigRational::from_integer(2.into());
    let exact = (one + delta / two) * BigRational::from_integer(BigInt::from(pairs(l)))
        / BigRational::from_integer(BigInt::from(n));
    let value = exact.to_f64().unwrap_or(f64::INFINITY);
    Ok(SuccessThreshold { exact, value })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub threshold: f64,
    pub success: bool,
}

/// Pair-match count of one batch of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionReport {
    pub z: u64,
    pub multiplicities: HashMap<StateId, u64>,
    pub verdict: Option<Verdict>,
}

impl CollisionReport {
    pub fn judge(mut self, threshold: &SuccessThreshold) -> Self {
        self.verdict = Some(Verdict {
            threshold: threshold.value(),
            success: threshold.admits(self.z),
        });
        self
    }

    pub fn success(&self) -> Option<bool> {
        self.verdict.map(|v| v.success)
    }
}

/// Number of pairs `j < k` with `samples[j] == samples[k]`, via a
/// multiplicity table: `z = sum_x C(count_x, 2)`.
pub fn collision_count(samples: &[StateId]) -> CollisionReport {
    let mut multiplicities: HashMap<StateId, u64> = HashMap::with_capacity(samples.len());
    for &s in samples {
        *multiplicities.entry(s).or_insert(0) += 1;
    }
    let z = multiplicities.values().map(|&c| c * (c - 1) / 2).sum();
    CollisionReport {
        z,
        multiplicities,
        verdict: None,
    }
}

/// `E(Z) = C(l,2) * sum p_x^2`.
pub fn expected_z(p: &DistributionVector, l: u64) -> f64 {
    pairs(l) as f64 * p.sum_of_squares()
}

/// Upper bound `E(Z) * (1 + (2 sqrt(n) / l) * E(Z))` on `var(Z)`.
pub fn variance_bound(expected_z: f64, n: u64, l: u64) -> f64 {
    expected_z * (1.0 + 2.0 * (n as f64).sqrt() / l as f64 * expected_z)
}

/// `||n p - 1||^2` in the `1/n`-weighted norm, i.e. the chi-square
/// divergence of `p` from uniform.
pub fn l2_deviation_squared(p: &DistributionVector) -> f64 {
    let n = p.len() as f64;
    p.as_slice()
        .iter()
        .map(|&x| {
            let r = n * x - 1.0;
            r * r
        })
        .sum::<f64>()
        / n
}

pub fn l2_deviation(p: &DistributionVector) -> f64 {
    l2_deviation_squared(p).sqrt()
}

/// Total variation distance, `(1/2) * sum |p_x - q_x|`.
pub fn tv_distance(p: &DistributionVector, q: &DistributionVector) -> Result<f64, StatsError> {
    if p.len() != q.len() {
        return Err(StatsError::SizeMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let l1: f64 = p
        .as_slice()
        .iter()
        .zip(q.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(0.5 * l1)
}

/// Empirical distribution of `samples` over `n` states.
pub fn empirical(samples: &[StateId], n: usize) -> DistributionVector {
    let mut counts = vec![0.0; n];
    for s in samples {
        counts[s.index()] += 1.0;
    }
    let total = samples.len() as f64;
    DistributionVector::from_raw(counts.into_iter().map(|c| c / total).collect())
}
