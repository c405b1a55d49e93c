//! Experiment sweeps, invariant suites and lower-bound tables.

pub mod checks;
pub mod config;
pub mod lb;
pub mod sweep;

pub use checks::{run_checks, CheckOptions, CheckRow, Suite};
pub use config::{ExperimentConfig, M2Mode};
pub use lb::{lb_table, write_lb_csv, LbRow};
pub use sweep::{run, ResultRecord, RunOptions};
