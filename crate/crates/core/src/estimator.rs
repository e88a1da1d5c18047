//! Staged horizon search driven by the collision statistic, then sampling at
//! the chosen horizon.
//!
//! Stage `i` runs `m` experiments. Each experiment simulates `l` lazy copies
//! from `x0` for `2^i` steps and counts coinciding pairs `Z`. An experiment
//! succeeds when `Z <= (1 + delta/2) C(l,2) / n`. The search stops at the
//! first stage where at least half of the experiments succeed, or at the cap
//! `i_max = ceil(log2 A_n)`. Fresh copies are then run for `2^{i'}` steps
//! and their end states are returned.
//!
//! Every copy draws from its own [`RandomStream`], addressed by
//! `(purpose, stage, experiment, copy)`, so results do not depend on how
//! rayon schedules the work.

use log::warn;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::chain::{stream_id, ChainOracle, LazyChain, RandomStream, StateId, StreamPurpose};
use crate::stats::{self, CollisionReport};

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("need n >= 1, got {0}")]
    States(u64),
    #[error("epsilon must lie in (0, 1], got {0}")]
    Epsilon(f64),
    #[error("scale must lie in (0, 1], got {0}")]
    Scale(f64),
    #[error("sample count must be at least 1")]
    SampleCount,
    #[error("stage cap {0} is too large to simulate")]
    HorizonOverflow(u32),
}

/// Constants of one run, all derived from `(n, epsilon, scale)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSet {
    pub n: u64,
    pub epsilon: f64,
    /// `epsilon^2`.
    pub delta: f64,
    /// Copies per experiment.
    pub l: u64,
    /// Experiments per stage.
    pub m: u64,
    /// `n^4 ln(2n / epsilon)`.
    pub a_n: f64,
    /// `ceil(log2 a_n)`, at least 1.
    pub i_max: u32,
    pub scale: f64,
}

/// Copy count the full constants call for: `ceil(1 + 512 sqrt(n) / epsilon^2)`.
pub fn full_copies(n: u64, epsilon: f64) -> u64 {
    (1.0 + 512.0 * (n as f64).sqrt() / (epsilon * epsilon)).ceil() as u64
}

/// Experiment count the full constants call for: `ceil(8 ln(2 a_n / epsilon))`.
pub fn full_experiments(a_n: f64, epsilon: f64) -> u64 {
    (8.0 * (2.0 * a_n / epsilon).ln()).ceil().max(1.0) as u64
}

fn ceil_log2(x: f64) -> u32 {
    if x <= 1.0 {
        return 0;
    }
    let mut i = x.log2().ceil() as u32;
    while 2f64.powi(i as i32) < x {
        i += 1;
    }
    while i > 0 && 2f64.powi(i as i32 - 1) >= x {
        i -= 1;
    }
    i
}

/// Derives `(delta, l, m, A_n, i_max)`. With `scale < 1` both `l` and `m`
/// are multiplied by `scale` before rounding up (floors `l >= 2`, `m >= 1`),
/// which voids the accuracy guarantee.
pub fn derive_params(n: u64, epsilon: f64, scale: f64) -> Result<ParamSet, ParamError> {
    if n < 1 {
        return Err(ParamError::States(n));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(ParamError::Epsilon(epsilon));
    }
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(ParamError::Scale(scale));
    }
    let nf = n as f64;
    let delta = epsilon * epsilon;
    let a_n = nf.powi(4) * (2.0 * nf / epsilon).ln();
    let i_max = ceil_log2(a_n).max(1);
    let mut l = full_copies(n, epsilon);
    let mut m = full_experiments(a_n, epsilon);
    if scale < 1.0 {
        l = ((l as f64 * scale).ceil() as u64).max(2);
        m = ((m as f64 * scale).ceil() as u64).max(1);
        warn!("scale {scale} < 1: l={l}, m={m}; the accuracy guarantee does not apply to this run");
    }
    Ok(ParamSet {
        n,
        epsilon,
        delta,
        l,
        m,
        a_n,
        i_max,
        scale,
    })
}

impl ParamSet {
    pub fn guarantee_voided(&self) -> bool {
        self.scale < 1.0
    }

    pub fn threshold(&self) -> stats::SuccessThreshold {
        stats::success_threshold(self.l, self.n, self.delta)
            .expect("params validated at derivation")
    }
}

/// `2^i` steps.
pub fn horizon(i: u32) -> u64 {
    1u64.checked_shl(i)
        .filter(|_| i < 64)
        .unwrap_or_else(|| panic!("horizon 2^{i} does not fit in 64 bits"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub i: u32,
    pub horizon: u64,
    pub experiments: u64,
    pub successes: u64,
    pub z_values: Vec<u64>,
    pub threshold: f64,
    pub steps_charged: u64,
    pub stop: bool,
}

impl StageRecord {
    pub fn mean_z(&self) -> f64 {
        if self.z_values.is_empty() {
            return 0.0;
        }
        self.z_values.iter().sum::<u64>() as f64 / self.z_values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorResult {
    pub params: ParamSet,
    pub seed: u64,
    pub i_final: u32,
    pub horizon: u64,
    pub samples: Vec<StateId>,
    pub stages: Vec<StageRecord>,
    pub estimation_steps: u64,
    pub sampling_steps: u64,
    pub total_steps: u64,
    pub capped: bool,
}

/// `l` copies for `2^i` steps each, with copy `c` drawing from `streams(c)`.
pub fn run_experiment_with<O, F>(
    chain: &LazyChain<O>,
    i: u32,
    params: &ParamSet,
    streams: F,
) -> CollisionReport
where
    O: ChainOracle,
    F: Fn(u64) -> RandomStream + Sync,
{
    let t = horizon(i);
    let samples: Vec<StateId> = (0..params.l)
        .into_par_iter()
        .map(|c| chain.simulate(t, &mut streams(c)))
        .collect();
    stats::collision_count(&samples).judge(&params.threshold())
}

/// Experiment `experiment` of stage `i` on the standard stream layout.
pub fn run_experiment<O: ChainOracle>(
    chain: &LazyChain<O>,
    i: u32,
    experiment: u64,
    params: &ParamSet,
    seed: u64,
) -> CollisionReport {
    run_experiment_with(chain, i, params, |c| {
        RandomStream::new(seed, stream_id(StreamPurpose::Estimation, i, experiment, c))
    })
}

/// `m` independent experiments at horizon `2^i`. Stops when
/// `2 * successes >= m` or `i == i_max`.
pub fn run_stage<O: ChainOracle>(
    chain: &LazyChain<O>,
    i: u32,
    params: &ParamSet,
    seed: u64,
) -> StageRecord {
    let reports: Vec<CollisionReport> = (0..params.m)
        .into_par_iter()
        .map(|e| run_experiment(chain, i, e, params, seed))
        .collect();
    let successes = reports.iter().filter(|r| r.success() == Some(true)).count() as u64;
    let t = horizon(i);
    StageRecord {
        i,
        horizon: t,
        experiments: params.m,
        successes,
        z_values: reports.iter().map(|r| r.z).collect(),
        threshold: params.threshold().value(),
        steps_charged: params.m * params.l * t,
        stop: 2 * successes >= params.m || i >= params.i_max,
    }
}

/// Result of the stage loop alone.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSearch {
    pub i_final: u32,
    pub stages: Vec<StageRecord>,
    pub capped: bool,
}

/// Runs stages `i = 1, 2, ...` until one signals stop.
pub fn search_horizon<O: ChainOracle>(
    chain: &LazyChain<O>,
    params: &ParamSet,
    seed: u64,
) -> Result<HorizonSearch, ParamError> {
    if params.i_max >= 64 {
        return Err(ParamError::HorizonOverflow(params.i_max));
    }
    let mut stages = Vec::new();
    for i in 1..=params.i_max {
        let record = run_stage(chain, i, params, seed);
        let stop = record.stop;
        let voted = 2 * record.successes >= record.experiments;
        stages.push(record);
        if stop {
            return Ok(HorizonSearch {
                i_final: i,
                stages,
                capped: !voted,
            });
        }
    }
    unreachable!("stage i_max always stops")
}

/// Stage loop followed by `k` fresh runs of `2^{i'}` steps.
pub fn sample_many<O: ChainOracle>(
    oracle: O,
    epsilon: f64,
    k: u64,
    scale: f64,
    seed: u64,
) -> Result<EstimatorResult, ParamError> {
    if k == 0 {
        return Err(ParamError::SampleCount);
    }
    let params = derive_params(oracle.num_states(), epsilon, scale)?;
    let chain = LazyChain::new(oracle);
    let search = search_horizon(&chain, &params, seed)?;
    let estimation_steps: u64 = search.stages.iter().map(|s| s.steps_charged).sum();
    debug_assert_eq!(chain.steps_charged(), estimation_steps);

    let t = horizon(search.i_final);
    let samples: Vec<StateId> = (0..k)
        .into_par_iter()
        .map(|j| {
            let id = stream_id(StreamPurpose::Sampling, search.i_final, 0, j);
            chain.simulate(t, &mut RandomStream::new(seed, id))
        })
        .collect();
    let sampling_steps = k * t;
    debug_assert_eq!(chain.steps_charged(), estimation_steps + sampling_steps);

    Ok(EstimatorResult {
        params,
        seed,
        i_final: search.i_final,
        horizon: t,
        samples,
        stages: search.stages,
        estimation_steps,
        sampling_steps,
        total_steps: estimation_steps + sampling_steps,
        capped: search.capped,
    })
}

/// One near-stationary sample.
pub fn sample_stationary<O: ChainOracle>(
    oracle: O,
    epsilon: f64,
    scale: f64,
    seed: u64,
) -> Result<EstimatorResult, ParamError> {
    sample_many(oracle, epsilon, 1, scale, seed)
}
