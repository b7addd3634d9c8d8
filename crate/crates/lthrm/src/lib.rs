//! File formats, configuration, parallel drivers, reports and the `lthrm`
//! command line on top of [`lthrm_core`].

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod recording;
pub mod report;

pub use error::{Error, Result};
