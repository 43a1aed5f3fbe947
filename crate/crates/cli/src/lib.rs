//! File formats and subcommands of the `hnwave` tool: WAV I/O, feature
//! files, checkpoints, run configuration, and the extract / train / synth /
//! eval commands.

pub mod checkpoint;
pub mod commands;
pub mod container;
pub mod error;
pub mod featfile;
pub mod runconfig;
pub mod wav;

pub use error::{CliError, Result};
