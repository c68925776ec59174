//! Scenario runner for the cell-free mobility simulator: JSON configuration,
//! the drop/interval harness, summary statistics and result files.

pub mod config;
pub mod harness;
pub mod output;
pub mod summary;

pub use config::{ConfigError, Policy, Scenario, ScenarioConfig};
pub use harness::{run, RunError, RunOptions, RunOutput, Summary};
