//! File formats and commands behind the `abe` binary.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod manifest;
pub mod methods;
pub mod model_io;
pub mod wav;

pub use cli::Cli;
pub use commands::run;
pub use error::{CliError, Result};
