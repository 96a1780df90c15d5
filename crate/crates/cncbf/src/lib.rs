//! File formats, artifact plumbing and subcommands of the `cncbf` pipeline.

pub mod commands;
pub mod error;
pub mod field_io;
pub mod manifest;
pub mod oracle;
pub mod report;
pub mod weights;

pub use error::{CliError, CliResult};
