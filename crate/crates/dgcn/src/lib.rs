//! File formats, experiment sweeps and the command-line front end for
//! [`dgcn_core`].

pub mod binary;
pub mod cli;
pub mod dataset;
mod error;
pub mod experiment;
pub mod sweep;

pub use error::{Error, Result};
