//! Command-line front end for the `ptnm` toolkit: builds process tensors from
//! model configs, checks the membership conditions, and computes the distance
//! measures once or along a sweep of the middle time.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_build, cmd_check, cmd_demo, cmd_measure, cmd_sweep};
pub use config::{Check, Command, Format, RunConfig};
pub use error::{CliError, Result};
