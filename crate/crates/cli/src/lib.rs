//! Operator surface for `bmlp`: configuration, dataset wiring, training and
//! evaluation commands, metrics files, cost reports and micro-benchmarks.

pub mod bench;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod metrics;

pub use commands::{cost_report, eval, eval_on, train, train_on, EvalReport, TrainOutcome};
pub use config::{DatasetKind, RunConfig};
pub use error::{CliError, Result};
