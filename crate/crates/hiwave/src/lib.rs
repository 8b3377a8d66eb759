//! UCI-HAR ingestion, experiment runner, file formats and command line for
//! the `hiwave-core` classifier.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod records;

pub use error::{HiwaveError, Result};
