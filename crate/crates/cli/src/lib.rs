//! Command line and HTTP front end for neural generalized cylinders.

pub mod commands;
pub mod error;
pub mod field;
pub mod scene;
pub mod server;

pub use error::{CliError, ErrorKind};
