//! Descriptors, run-matrix expansion, and the on-disk results tree: one
//! directory per (backend, variant, rank count) holding result CSVs,
//! `metadata.log` and `alloc.csv`, registered in a per-system index.

pub mod config;
pub mod plan;
pub mod results;
pub mod runner;

pub use config::{
    load_env, load_test, parse_env, parse_size, parse_test, Backend, EnvConfig, GranularityMode, ModelOverrides, SizeRange,
    Sweep, TestConfig, TopologyRef,
};
pub use plan::{plan_runs, RunKey, RunPlan, RunPoint, Variant, DEFAULT_VARIANT};
pub use results::{parse_results, render_results, write_results, ParsedResults, ResultRow, SeriesKey};
pub use runner::{
    read_index, read_metadata, replay, run, run_files, run_with, IndexRow, PlanOutcome, RunMetadata, RunOptions,
    RunOutcome, RunStatus, INDEX_HEADER,
};
