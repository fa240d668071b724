//! Experiment harness: configuration, compression accounting, metrics
//! reports, grids, and masked-input image emission.

mod accounting;
mod config;
mod report;
mod run;

pub use accounting::{param_count, total_dropout_rate, DropAccounting};
pub use config::{resolve_out_dir, DataPaths, ExperimentConfig, GridConfig, OUT_DIR_ENV};
pub use report::{render_csv, render_table, MetricsReport};
pub use run::{emit_masked_inputs, run_experiment, run_grid, GridOutcome, RunArtifacts};
