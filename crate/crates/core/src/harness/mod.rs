//! Configuration, persistence, metrics, verification, and the CLI.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod metrics;
pub mod pipeline;
pub mod verify;

pub use checkpoint::{Checkpoint, Dtype};
pub use cli::run_command;
pub use config::{parse_config, DataConfig, EvalConfig, RunConfig};
pub use metrics::{report_rows, trace_rows, write_metrics, MetricsRow, HEADER};
pub use pipeline::{
    run_baseline, run_compare, run_eval, run_train, BaselineSummary, CompareRow, Paradigm, TrainSummary,
};
pub use verify::{gradcheck_suite, GradCheckResult};
