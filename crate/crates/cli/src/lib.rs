//! Command-line front end and network service for `sleeve-core`.
//!
//! The `sleeve` binary is a thin clap layer over the functions here, so
//! tests can drive the same code paths without spawning processes.

pub mod config;
pub mod error;
pub mod fit;
pub mod plant_demo;
pub mod server;
pub mod session;
pub mod ws;

pub use config::Config;
pub use error::CliError;
