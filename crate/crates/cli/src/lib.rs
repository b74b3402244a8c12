//! Experiment grid runner for the `tabclass` command: config parsing, grid
//! execution and report emission.

pub mod config;
pub mod grid;
pub mod report;

pub use config::{BalancingChoice, ConfigError, ExperimentConfig, Overrides};
pub use grid::{run_grid, CellResult, GridRun};
pub use report::{emit_reports, Metric};

use tabclass::data::{load_csv, DataError, LoadOptions};
use tabclass::Table;

pub fn load_dataset(config: &ExperimentConfig) -> Result<Table, DataError> {
    let options = LoadOptions { kind_hints: config.kind_hints.clone(), impute_missing: config.impute_missing };
    load_csv(&config.dataset_location, &config.target_name, &options)
}
