//! Experiment orchestration: configuration, the per-seed round loop for every
//! variant, seed-parallel replication, metrics and result files.

pub mod config;
pub mod figures;
pub mod metrics;
pub mod output;
pub mod rng;
pub mod run;

pub use config::{ExperimentConfig, SeedSpec, Variant};
pub use figures::{policy_table, reproduce, PolicyPoint, Preset};
pub use metrics::{
    bootstrap_ordering, run_many, run_replications, summarize, Summary, VariantSummary,
};
pub use output::simulate;
pub use run::{run_prepared, run_single, Prepared, RoundRow, SeedRun, VariantTrace};
