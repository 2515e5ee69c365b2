//! Datasets, configuration, persistence, experiments and the CLI.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod experiment;
mod files;
pub mod tables;

pub use files::write_atomic;
