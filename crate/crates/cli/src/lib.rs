//! Configuration, dispatch and serialization for the `infobound` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{run, Outcome};
pub use config::{Overrides, RouteChoice, RunConfig};
pub use error::CliError;
