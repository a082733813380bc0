//! Scenario files, CSV/JSON artifacts and the commands behind `ccharge`.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::{Outcome, RunOptions};
pub use config::{Scenario, ScenarioConfig};
pub use error::{CliError, Result};
