//! Detector output shared by the baseline and classifier pipelines.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectedEvent {
    /// Sample index reported as the swallow position.
    pub start: usize,
    /// First and last sample index covered by the event (inclusive).
    pub span: (usize, usize),
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub recording_id: String,
    pub events: Vec<DetectedEvent>,
    pub method: String,
    pub params_digest: String,
}

impl DetectionResult {
    pub fn validate(&self) -> Result<()> {
        if self.events.windows(2).any(|w| w[0].start > w[1].start) {
            return Err(Error::data("events must be sorted by start"));
        }
        for e in &self.events {
            if e.span.0 > e.span.1 {
                return Err(Error::data("event span has first > last"));
            }
            if !(0.0..=1.0).contains(&e.confidence) {
                return Err(Error::data("event confidence outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn starts(&self) -> Vec<usize> {
        self.events.iter().map(|e| e.start).collect()
    }
}

/// Hex SHA-256 over `name=bits;` pairs. Stable across platforms.
pub fn params_digest(params: &[(&str, f64)]) -> String {
    let mut h = Sha256::new();
    for (name, value) in params {
        h.update(name.as_bytes());
        h.update(b"=");
        h.update(value.to_bits().to_le_bytes());
        h.update(b";");
    }
    hex_string(&h.finalize())
}

/// Hex SHA-256 of a slice of floats (bit patterns, little-endian).
pub fn f64_digest(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
    hex_string(&h.finalize())
}

/// Hex SHA-256 over several text parts, each terminated by a NUL byte.
pub fn text_digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex_string(&h.finalize())
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}
