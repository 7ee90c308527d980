//! Experiment runner around `decloc-core`: file formats, configuration,
//! checkpoints, and the end-to-end pipeline the `decloc` binary drives.

#![forbid(unsafe_code)]

pub mod checkpoint;
pub mod config;
pub mod csvio;
pub mod error;
pub mod pipeline;

pub use error::CliError;
