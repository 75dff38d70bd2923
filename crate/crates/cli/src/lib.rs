//! Batch front-end: file formats, the simulate/fit/evaluate/benchmark
//! commands and run manifests.

pub mod benchmark;
pub mod commands;
pub mod error;
pub mod files;
pub mod grid;
pub mod io;
pub mod manifest;

pub use error::{CliError, CliResult};
