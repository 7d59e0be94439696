//! File formats, datasets, training runs and the command line around
//! `tunescribe-core`.
pub mod audio;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod download;
pub mod error;
pub mod fixtures;
pub mod fsio;
pub mod pipeline;
pub mod sidecar;
pub mod tensor_file;

pub use error::{Error, Result};
