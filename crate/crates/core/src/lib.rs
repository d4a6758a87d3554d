//! Cluster-free benchmarking of collective communication algorithms.
//!
//! Reference algorithms are expressed as explicit per-rank [`Schedule`]s and
//! then consumed three ways:
//!
//! - [`fabric`] executes them over an in-process message fabric with real
//!   payloads, checks the result against [`model::naive_oracle`] and records
//!   per-phase wall-clock timings;
//! - [`netsim`] replays them in virtual time under a hierarchical
//!   latency/bandwidth/compute cost model;
//! - [`tracer`] classifies every transfer by where its endpoints sit in a
//!   group/node topology.
//!
//! [`orchestrator`] turns declarative descriptors into a run matrix and a
//! results tree, [`analysis`] post-processes that tree, and [`wizard`]/[`cli`]
//! are the interactive and flag-driven front ends.

pub mod algorithms;
pub mod analysis;
pub mod cli;
pub mod error;
pub mod fabric;
pub mod model;
pub mod netsim;
pub mod orchestrator;
pub mod tracer;
pub mod wizard;

pub use algorithms::{build_schedule, cost_terms, validate_schedule, AlgorithmId, CostTerms, Schedule};
pub use error::{ConfigError, Error, Result};
pub use model::{naive_oracle, reduce_elementwise, CollectiveKind, Data, DataType, PhaseTag, RankVector, ReduceOp};

/// Version string recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
