//! Pipeline commands, run-directory layout and HTTP services of the `audit`
//! tool.

pub mod api;
pub mod commands;
pub mod error;
pub mod layout;
pub mod sim_api;

pub use error::CliError;
