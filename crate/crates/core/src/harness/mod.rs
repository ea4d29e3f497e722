//! Experiment orchestration: per-cell fits, resumable sweeps, the appendix
//! toy studies and the gradient-check suite.

pub mod appendix;
mod cell;
mod config;
pub mod gradsuite;
mod models;
pub mod plot;
mod report;
mod sweep;

pub use cell::{run_cell, CellKey, CellOutcome, Experiment};
pub use config::{parse_list, ExperimentConfig, Method, Overrides, DESK_GRID, DESK_TEST_SIZE, FULL_GRID, FULL_TEST_SIZE};
pub use models::{fit_method, forest_config, input_shape, net_train_config, Fitted};
pub use report::{format_rows, parse_rows, write_atomic, RESULTS_HEADER};
pub use sweep::{sweep, sweep_with_outcome, SweepOutcome};
