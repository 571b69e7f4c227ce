//! Command-line front end: TOML run configs, workspace stiffness maps,
//! single-point reports and the reference comparison table.

pub mod app;
pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use error::{CliError, Result};
