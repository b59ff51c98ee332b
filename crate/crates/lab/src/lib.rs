//! Command-line runner for the dlangevin-core solvers: TOML configs, CSV and
//! JSON artifacts, and a manifest per run.

pub mod config;
pub mod error;
pub mod io;
pub mod runner;

pub use config::RunConfig;
pub use error::LabError;
pub use runner::{run, Command};
