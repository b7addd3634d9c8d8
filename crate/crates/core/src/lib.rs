//! Swallow detection and clustering for long-term high-resolution esophageal
//! manometry.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! and report rendering live in the `lthrm` crate.
//!
//! Pipeline:
//! - [`signal`]: smoothing, clipping and scaling of the 36-sensor pressure matrix.
//! - [`baseline`]: threshold-and-peak detector.
//! - [`ml`]: sliding-window CNN classifier and event extraction.
//! - [`cluster`]: change-filter features, PCA and two-stage clustering.
//! - [`eval`]: tolerance-window matching, metrics, cross-validation, Fleiss' kappa.
//! - [`synth`]: labeled synthetic recordings.
#![no_std]
#![deny(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod baseline;
pub mod cluster;
pub mod detection;
pub mod error;
pub mod eval;
pub mod image;
pub mod matrix;
pub mod ml;
pub mod signal;
pub mod synth;

pub use detection::{DetectedEvent, DetectionResult};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use signal::{AnnotationSet, ManometryRecording};
