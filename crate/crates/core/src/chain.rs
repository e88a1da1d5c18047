//! Black-box chain access: the one-step oracle, the lazy wrapper that holds
//! with probability `1/n`, and seeded random streams.
//!
//! Every random draw in the crate flows through a [`RandomStream`] addressed
//! by `(seed, stream_id)`. Two streams with the same address replay the same
//! sequence no matter which thread or in which order they run, which is what
//! lets the estimator fan copies out over a thread pool and still produce
//! byte-identical results.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A state of the chain, `0 <= id < n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u64);

impl StateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for StateId {
    fn from(v: u64) -> Self {
        StateId(v)
    }
}

/// Seeded generator addressed by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose 64-bit stream selector gives independent
/// keystreams for distinct ids under a common key.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform integer in `0..bound`. `bound` must be nonzero.
    pub fn below(&mut self, bound: u64) -> u64 {
        self.rng.gen_range(0..bound)
    }

    /// Uniform real in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// What a stream is used for. Part of the stream-id layout so that the
/// estimation phase and the final sampling run never share randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    Estimation = 0,
    Sampling = 1,
    Auxiliary = 2,
}

const PURPOSE_BITS: u32 = 2;
const STAGE_BITS: u32 = 8;
const EXPERIMENT_BITS: u32 = 20;
const COPY_BITS: u32 = 64 - PURPOSE_BITS - STAGE_BITS - EXPERIMENT_BITS;

/// Packs `(purpose, stage, experiment, copy)` into a 64-bit stream id.
///
/// Field widths: 2 / 8 / 20 / 34 bits. The packing is injective within those
/// ranges; out-of-range indices panic rather than silently aliasing.
pub fn stream_id(purpose: StreamPurpose, stage: u32, experiment: u64, copy: u64) -> u64 {
    assert!(
        u64::from(stage) < 1 << STAGE_BITS,
        "stage index {stage} out of range"
    );
    assert!(
        experiment < 1 << EXPERIMENT_BITS,
        "experiment index {experiment} out of range"
    );
    assert!(copy < 1 << COPY_BITS, "copy index {copy} out of range");
    (purpose as u64) << (64 - PURPOSE_BITS)
        | u64::from(stage) << (EXPERIMENT_BITS + COPY_BITS)
        | experiment << COPY_BITS
        | copy
}

/// The `nextstate()` procedure plus the problem data `n` and `x0`.
///
/// Implementations must be shareable across worker threads; all mutable
/// randomness lives in the caller's [`RandomStream`].
pub trait ChainOracle: Sync {
    fn num_states(&self) -> u64;

    fn start(&self) -> StateId;

    /// One step of the (non-lazy) chain from `x`.
    fn next_state(&self, x: StateId, rng: &mut RandomStream) -> StateId;
}

impl<T: ChainOracle + ?Sized> ChainOracle for &T {
    fn num_states(&self) -> u64 {
        (**self).num_states()
    }

    fn start(&self) -> StateId {
        (**self).start()
    }

    fn next_state(&self, x: StateId, rng: &mut RandomStream) -> StateId {
        (**self).next_state(x, rng)
    }
}

/// Chain whose step ignores the current state and returns a uniform state.
/// Stationary from the first step; used as a calibration source for the
/// collision statistic.
#[derive(Debug, Clone, Copy)]
pub struct IidUniform {
    n: u64,
    x0: StateId,
}

impl IidUniform {
    pub fn new(n: u64, x0: StateId) -> Self {
        assert!(n >= 1, "need at least one state");
        assert!(x0.0 < n, "start state {x0} out of range for n={n}");
        Self { n, x0 }
    }
}

impl ChainOracle for IidUniform {
    fn num_states(&self) -> u64 {
        self.n
    }

    fn start(&self) -> StateId {
        self.x0
    }

    fn next_state(&self, _x: StateId, rng: &mut RandomStream) -> StateId {
        StateId(rng.below(self.n))
    }
}

/// Thread-safe tally of simulated steps.
#[derive(Debug, Default)]
pub struct StepCounter(AtomicU64);

impl StepCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&self, steps: u64) {
        self.0.fetch_add(steps, Ordering::Relaxed);
    }

    pub fn total(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// One lazy step: hold with probability exactly `1/n`, else delegate to the
/// oracle. The hold coin is always drawn so that stream consumption does not
/// depend on the outcome of earlier steps' coins.
pub fn lazy_step<O: ChainOracle + ?Sized>(
    oracle: &O,
    x: StateId,
    rng: &mut RandomStream,
) -> StateId {
    let n = oracle.num_states();
    let hold = rng.below(n) == 0;
    if hold {
        x
    } else {
        oracle.next_state(x, rng)
    }
}

/// Lazy wrapper around an oracle that charges every step (holds included)
/// to a shared counter.
pub struct LazyChain<O> {
    oracle: O,
    steps: StepCounter,
}

impl<O: ChainOracle> LazyChain<O> {
    pub fn new(oracle: O) -> Self {
        Self {
            oracle,
            steps: StepCounter::new(),
        }
    }

    pub fn oracle(&self) -> &O {
        &self.oracle
    }

    pub fn num_states(&self) -> u64 {
        self.oracle.num_states()
    }

    pub fn start(&self) -> StateId {
        self.oracle.start()
    }

    pub fn step(&self, x: StateId, rng: &mut RandomStream) -> StateId {
        self.steps.charge(1);
        lazy_step(&self.oracle, x, rng)
    }

    /// State after `t` lazy steps from `x0`.
    pub fn simulate(&self, t: u64, rng: &mut RandomStream) -> StateId {
        let mut x = self.oracle.start();
        for _ in 0..t {
            x = lazy_step(&self.oracle, x, rng);
        }
        self.steps.charge(t);
        x
    }

    pub fn steps_charged(&self) -> u64 {
        self.steps.total()
    }
}
