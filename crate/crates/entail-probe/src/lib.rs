//! File formats, model backends, pipeline stages and reports for the
//! `entail-probe` command.

pub mod backend;
pub mod cache;
pub mod config;
pub mod error;
pub mod files;
pub mod ngram;
pub mod pipeline;
pub mod report;

pub use error::{Error, ErrorKind, Result};
