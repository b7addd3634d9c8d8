//! JSON documents and the binary classifier format.
//!
//! Every JSON document is an object carrying `schema_version` and `kind`
//! next to its own fields. Keys are written in sorted order.

use std::fs;
use std::path::Path;

use lthrm_core::cluster::pca::PcaModel;
use lthrm_core::cluster::{ClusterConfig, ClusteringResult};
use lthrm_core::eval::{DistanceHistogram, MetricsReport};
use lthrm_core::ml::cnn::Architecture;
use lthrm_core::ml::{ClassifierModel, TrainingMeta, WindowOrigin};
use lthrm_core::{AnnotationSet, DetectionResult};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::recording::write_bytes;

pub const SCHEMA_VERSION: u32 = 1;

pub trait Document: Serialize + DeserializeOwned {
    const KIND: &'static str;

    /// Invariants that serde alone cannot express.
    fn check(&self) -> Result<(), String> {
        Ok(())
    }
}

impl Document for AnnotationSet {
    const KIND: &'static str = "annotations";

    fn check(&self) -> Result<(), String> {
        AnnotationSet::new(self.recording_id.clone(), self.starts().to_vec())
            .map(drop)
            .map_err(|e| format!("$.starts: {e}"))
    }
}

impl Document for DetectionResult {
    const KIND: &'static str = "detection";

    fn check(&self) -> Result<(), String> {
        self.validate().map_err(|e| format!("$.events: {e}"))
    }
}

impl Document for PcaModel {
    const KIND: &'static str = "pca";

    fn check(&self) -> Result<(), String> {
        if let Some(i) = self.components.iter().position(|c| c.len() != self.dim()) {
            return Err(format!("$.components[{i}]: length differs from $.mean"));
        }
        if self.explained_variance.len() != self.n_components() {
            return Err("$.explained_variance: one entry per component expected".into());
        }
        Ok(())
    }
}

/// Clustering output: one entry per swallow in `swallows`, `reduced` and
/// `result.assignments`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringDoc {
    pub config: ClusterConfig,
    pub swallows: Vec<WindowOrigin>,
    /// PCA coordinates of every swallow.
    pub reduced: Vec<Vec<f64>>,
    pub result: ClusteringResult,
    /// Events whose window ran past the end of the recording.
    pub skipped: Vec<WindowOrigin>,
}

impl Document for ClusteringDoc {
    const KIND: &'static str = "clustering";

    fn check(&self) -> Result<(), String> {
        let n = self.swallows.len();
        if self.reduced.len() != n {
            return Err(format!("$.reduced: {} rows for {n} swallows", self.reduced.len()));
        }
        if self.result.assignments.len() != n {
            return Err(format!(
                "$.result.assignments: {} entries for {n} swallows",
                self.result.assignments.len()
            ));
        }
        for (i, c) in self.result.clusters.iter().enumerate() {
            if c.members.iter().any(|&m| m >= n) || c.closest >= n || c.most_distant >= n {
                return Err(format!("$.result.clusters[{i}]: member index out of range"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsDoc {
    /// Row label in metric tables, e.g. the detector name.
    pub label: String,
    pub report: MetricsReport,
    pub histogram: DistanceHistogram,
}

impl Document for MetricsDoc {
    const KIND: &'static str = "metrics";
}

pub fn to_json<T: Document>(doc: &T) -> Result<String, String> {
    let mut value = serde_json::to_value(doc).map_err(|e| e.to_string())?;
    let Value::Object(map) = &mut value else {
        return Err(format!("{} does not serialize to an object", T::KIND));
    };
    map.insert("schema_version".into(), SCHEMA_VERSION.into());
    map.insert("kind".into(), T::KIND.into());
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| e.to_string())?;
    text.push('\n');
    Ok(text)
}

pub fn from_json<T: Document>(text: &str) -> Result<T, String> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    let Value::Object(map) = &mut value else {
        return Err("$: expected an object".into());
    };
    match map.remove("schema_version") {
        Some(Value::Number(n)) if n.as_u64() == Some(u64::from(SCHEMA_VERSION)) => {}
        Some(other) => {
            return Err(format!("$.schema_version: unsupported version {other} (expected {SCHEMA_VERSION})"))
        }
        None => return Err("$.schema_version: missing".into()),
    }
    match map.remove("kind") {
        Some(Value::String(k)) if k == T::KIND => {}
        Some(other) => return Err(format!("$.kind: expected \"{}\", found {other}", T::KIND)),
        None => return Err("$.kind: missing".into()),
    }
    let doc: T = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::from("$") } else { format!("$.{path}") };
        format!("{path}: {}", e.inner())
    })?;
    doc.check()?;
    Ok(doc)
}

pub fn write_document<T: Document>(doc: &T, path: &Path) -> Result<()> {
    let text = to_json(doc).map_err(|d| Error::format(path, d))?;
    write_bytes(path, text.as_bytes())
}

pub fn read_document<T: Document>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text).map_err(|d| Error::format(path, d))
}

pub const MODEL_MAGIC: [u8; 4] = *b"LTCM";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Binary classifier file; see docs/formats.md for the layout.
pub fn encode_model(m: &ClassifierModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(96 + 8 * (m.params.len() + 2 * m.epoch_losses.len()));
    let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    out.extend_from_slice(&MODEL_MAGIC);
    u32le(&mut out, MODEL_FORMAT_VERSION as usize);
    u32le(&mut out, m.version as usize);
    u32le(&mut out, m.arch.input_side);
    u32le(&mut out, m.arch.conv1_channels);
    u32le(&mut out, m.arch.conv2_channels);
    u32le(&mut out, m.window_shape.0);
    u32le(&mut out, m.window_shape.1);
    out.extend_from_slice(&m.training.learning_rate.to_le_bytes());
    u32le(&mut out, m.training.batch_size);
    u32le(&mut out, m.training.epochs);
    out.extend_from_slice(&m.training.seed.to_le_bytes());
    u32le(&mut out, m.epoch_losses.len());
    for v in m.epoch_losses.iter().chain(&m.epoch_accuracy) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(m.params.len() as u64).to_le_bytes());
    for v in &m.params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N], String> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| format!("truncated at byte {} reading {what}", self.pos))?;
        self.pos = end;
        Ok(chunk.try_into().unwrap())
    }

    fn u32(&mut self, what: &str) -> Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(what)?) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(what)?))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, String> {
        let needed = n.checked_mul(8).ok_or("length overflow")?;
        if self.bytes.len() - self.pos < needed {
            return Err(format!("truncated at byte {} reading {n} values of {what}", self.pos));
        }
        (0..n).map(|_| Ok(f64::from_le_bytes(self.take(what)?))).collect()
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<ClassifierModel, String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take::<4>("magic")? != MODEL_MAGIC {
        return Err("bad magic at byte 0".into());
    }
    let format = c.u32("format version")?;
    if format != MODEL_FORMAT_VERSION as usize {
        return Err(format!("unsupported format version {format} at byte 4"));
    }
    let version = c.u32("model version")? as u32;
    let arch = Architecture {
        input_side: c.u32("input side")?,
        conv1_channels: c.u32("conv1 channels")?,
        conv2_channels: c.u32("conv2 channels")?,
    };
    let window_shape = (c.u32("window rows")?, c.u32("window columns")?);
    let training = TrainingMeta {
        learning_rate: f64::from_le_bytes(c.take("learning rate")?),
        batch_size: c.u32("batch size")?,
        epochs: c.u32("epochs")?,
        seed: c.u64("seed")?,
    };
    let recorded = c.u32("epoch count")?;
    let epoch_losses = c.f64s(recorded, "epoch losses")?;
    let epoch_accuracy = c.f64s(recorded, "epoch accuracy")?;
    let n = usize::try_from(c.u64("parameter count")?).map_err(|_| "parameter count overflow")?;
    let params = c.f64s(n, "parameters")?;
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes after byte {}", bytes.len() - c.pos, c.pos));
    }
    let model = ClassifierModel {
        version,
        arch,
        window_shape,
        params,
        training,
        epoch_losses,
        epoch_accuracy,
    };
    model.validate().map_err(|e| e.to_string())?;
    Ok(model)
}

pub fn write_model(m: &ClassifierModel, path: &Path) -> Result<()> {
    write_bytes(path, &encode_model(m))
}

pub fn read_model(path: &Path) -> Result<ClassifierModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes).map_err(|d| Error::format(path, d))
}
