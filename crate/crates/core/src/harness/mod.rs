//! Scenario runner: configuration, the simulation loop, logs and reports.

pub mod config;
pub mod log;
pub mod matrix;
pub mod sim;
pub mod summary;
pub mod sweep;

pub use config::ScenarioConfig;
pub use log::{Event, EventKind, LogRecord, Outcome, SimLog};
pub use matrix::{run_matrix, FailureMode, Grid};
pub use sim::run;
pub use summary::{summarize, Summary};
pub use sweep::sweep_configurations;
