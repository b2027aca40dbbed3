//! File formats, run configuration and pipeline orchestration on top of
//! `contextbias-core`.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{Error, Result};
