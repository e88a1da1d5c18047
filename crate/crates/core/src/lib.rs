//! Near-stationary sampling from random walks on regular graphs using only a
//! black-box step procedure.
//!
//! The walk is simulated at horizons `2, 4, 8, ...`. At each horizon many
//! independent copies are run and the number of pairwise coincidences among
//! their end states is counted. Before mixing, collisions exceed the uniform
//! birthday rate. Once that excess falls below a threshold, the horizon is
//! accepted and a fresh walk of that length supplies the sample.
//!
//! Modules:
//! - [`chain`]: oracle trait, lazy wrapper, seeded streams
//! - [`graphs`]: regular graph families and edge-list I/O
//! - [`stats`]: collision statistic, moments, distances
//! - [`estimator`]: constants, stages, sampling
//! - [`oracle`]: exact small-n verification
//! - [`cli`]: command-line harness

pub mod chain;
pub mod cli;
pub mod estimator;
pub mod graphs;
pub mod oracle;
pub mod stats;

pub use chain::{ChainOracle, LazyChain, RandomStream, StateId};
pub use estimator::{derive_params, sample_many, sample_stationary, EstimatorResult, ParamSet};
pub use graphs::RegularGraph;
pub use stats::DistributionVector;
