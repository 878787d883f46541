//! Batch front end for `anticonc`: instance files, subcommands and the
//! corpus verification suite.

pub mod commands;
pub mod error;
pub mod instance;
pub mod verify;

pub use error::CliError;
