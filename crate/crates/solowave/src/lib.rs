//! Files and command line for [`solowave_core`]: WAV input and output, run
//! directories holding trained bundles, `key = value` configuration, metric
//! reports, images and the `solowave` command.

pub mod audio;
pub mod bundle;
pub mod cli;
pub mod config;
mod error;
pub mod images;
pub mod report;

pub use error::{Error, Result};
