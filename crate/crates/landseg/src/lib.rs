//! File formats, the training driver and the `landseg` command line, on top
//! of `landseg-core`.

pub mod archive;
pub mod cli;
pub mod config;
mod error;
pub mod raster;
pub mod store;
pub mod training;

pub use error::{Error, Result};
pub use landseg_core as core;
