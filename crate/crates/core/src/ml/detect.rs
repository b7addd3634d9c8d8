//! Rolling-window inference and event extraction.
//!
//! Every window position yields a class `o` and a confidence `c`. The product
//! `s = o * c` keeps only swallow confidences; its trailing moving average is
//! thresholded and every run of consecutive hits becomes one event, placed at
//! the run's maximum.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::model::WindowClassifier;
use crate::detection::{params_digest, text_digest, DetectedEvent, DetectionResult};
use crate::error::{Error, Result};
use crate::signal::{moving_average, ManometryRecording};

pub const METHOD_TAG: &str = "ml";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlParams {
    /// Samples between consecutive window starts.
    pub stride: usize,
    /// Smoothing width in samples; converted to `ceil(smooth_window / stride)`
    /// inference positions.
    pub smooth_window: usize,
    pub threshold: f64,
}

impl Default for MlParams {
    fn default() -> Self {
        MlParams {
            stride: 1,
            smooth_window: 20,
            threshold: 0.2,
        }
    }
}

impl MlParams {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::param("stride", "must be positive"));
        }
        if self.smooth_window == 0 {
            return Err(Error::param("smooth_window", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::param("threshold", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Smoothing width in inference positions.
    pub fn smooth_positions(&self) -> usize {
        self.smooth_window.div_ceil(self.stride).max(1)
    }

    pub fn digest(&self) -> String {
        params_digest(&[
            ("stride", self.stride as f64),
            ("smooth_window", self.smooth_window as f64),
            ("threshold", self.threshold),
        ])
    }
}

/// Per-window classifier output.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InferenceOutput {
    pub classes: Vec<u8>,
    pub confidences: Vec<f64>,
    /// Sample index at which each window starts.
    pub window_starts: Vec<usize>,
}

impl InferenceOutput {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Window starts `0, stride, 2*stride, ...` that fit in `samples`.
pub fn window_starts(samples: usize, window_len: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(Error::param("stride", "must be positive"));
    }
    if samples < window_len {
        return Err(Error::data(format!(
            "recording has {samples} samples, fewer than one {window_len}-sample window"
        )));
    }
    Ok((0..=samples - window_len).step_by(stride).collect())
}

/// Classifies every window position in order.
pub fn sliding_window_inference<C: WindowClassifier + ?Sized>(
    model: &C,
    r: &ManometryRecording,
    stride: usize,
) -> Result<InferenceOutput> {
    r.require_preprocessed()?;
    let starts = window_starts(r.samples(), model.window_len(), stride)?;
    let mut out = InferenceOutput {
        classes: Vec::with_capacity(starts.len()),
        confidences: Vec::with_capacity(starts.len()),
        window_starts: Vec::new(),
    };
    for &start in &starts {
        let c = model.classify_at(r.values(), start)?;
        out.classes.push(c.class);
        out.confidences.push(c.confidence);
    }
    out.window_starts = starts;
    Ok(out)
}

/// One thresholded run, in inference-position units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    /// Position of the smoothed maximum within the run (earliest on ties).
    pub peak: usize,
    pub first: usize,
    pub last: usize,
    pub confidence: f64,
}

/// `s = o * c` (exactly zero where `o` is zero).
pub fn swallow_scores(o: &[u8], c: &[f64]) -> Result<Vec<f64>> {
    if o.len() != c.len() {
        return Err(Error::param(
            "confidences",
            format!("length {} differs from classes length {}", c.len(), o.len()),
        ));
    }
    o.iter()
        .zip(c)
        .map(|(&class, &conf)| match class {
            0 => Ok(0.0),
            1 => Ok(conf),
            other => Err(Error::param("classes", format!("class {other} is not binary"))),
        })
        .collect()
}

/// Runs of the smoothed score strictly above `threshold`.
pub fn extract_events(o: &[u8], c: &[f64], smooth_w: usize, threshold: f64) -> Result<Vec<RunEvent>> {
    let s = swallow_scores(o, c)?;
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let smoothed = moving_average(&s, smooth_w)
        .map_err(|_| Error::param("smooth_w", format!("window {smooth_w} must lie in 1..={}", s.len())))?;
    Ok(runs_above(&smoothed, threshold))
}

pub(crate) fn runs_above(smoothed: &[f64], threshold: f64) -> Vec<RunEvent> {
    let mut events = Vec::new();
    let mut i = 0;
    while i < smoothed.len() {
        if smoothed[i] > threshold {
            let first = i;
            let mut peak = i;
            while i < smoothed.len() && smoothed[i] > threshold {
                if smoothed[i] > smoothed[peak] {
                    peak = i;
                }
                i += 1;
            }
            events.push(RunEvent {
                peak,
                first,
                last: i - 1,
                confidence: smoothed[peak].clamp(0.0, 1.0),
            });
        } else {
            i += 1;
        }
    }
    events
}

/// Turns inference output into sample-indexed detections.
pub fn events_from_inference(
    inference: &InferenceOutput,
    params: &MlParams,
    recording_id: &str,
    model_identity: Option<&str>,
) -> Result<DetectionResult> {
    params.validate()?;
    let smooth = params.smooth_positions().min(inference.len().max(1));
    let runs = extract_events(&inference.classes, &inference.confidences, smooth, params.threshold)?;
    let to_sample = |k: usize| inference.window_starts[k];
    let events = runs
        .into_iter()
        .map(|run| DetectedEvent {
            start: to_sample(run.peak),
            span: (to_sample(run.first), to_sample(run.last)),
            confidence: run.confidence,
        })
        .collect();
    let digest = match model_identity {
        Some(id) => text_digest(&[&params.digest(), id]),
        None => params.digest(),
    };
    Ok(DetectionResult {
        recording_id: recording_id.into(),
        events,
        method: METHOD_TAG.into(),
        params_digest: digest,
    })
}

pub fn detect_ml<C: WindowClassifier + ?Sized>(
    model: &C,
    r: &ManometryRecording,
    params: &MlParams,
) -> Result<DetectionResult> {
    params.validate()?;
    let inference = sliding_window_inference(model, r, params.stride)?;
    events_from_inference(&inference, params, &r.patient_id, model.identity().as_deref())
}
