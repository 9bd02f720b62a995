//! Command-line front end for the satguard toolkit.

pub mod commands;
pub mod config;
pub mod error;

pub use config::ScenarioConfig;
pub use error::{exit, CliError};
