//! Reproducible experiments on top of the federation engine: config
//! loading, single runs, sweeps and run comparison.
//!
//! Every random draw comes from a generator derived from the master seed
//! (see [`crate::seed`]), so a config and seed always reproduce the same
//! artifacts byte for byte.

mod compare;
mod config;
mod run;
mod sweep;

pub use compare::{compare, CompareRow, Comparison};
pub use config::{
    load_config, CircuitConfig, DatasetConfig, Epsilon, ExperimentConfig, FederationSection,
    MetricsSection, Mode, QuantumSection, SweepAxes, TrainingSection, OUTPUT_DIR_ENV, SEED_ENV,
};
pub use run::{
    execute, prepare_data, run, summarize, FinalMetrics, PartitionManifest, PreparedData,
    RunResult, RunSummary, CONFIG_FILE, HISTORY_FILE, PARAMS_FILE, PARTITION_FILE, SUMMARY_FILE,
};
pub use sweep::{expand, run_sweep, SweepPoint, SWEEP_SUMMARY_FILE};
