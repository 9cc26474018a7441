//! File formats, dataset IO, reports and the command-line front end for
//! `advmark-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod export;
pub mod json;
pub mod manifest;
pub mod report;
pub mod summary;

pub use error::{Error, Result};
