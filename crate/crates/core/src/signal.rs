//! Recording data model and the smoothing / clipping / scaling chain.
//!
//! Smoothing uses a trailing ("valid") window: output column `j` is the mean
//! of input columns `j..j+w`, so the time axis shrinks by `w - 1` samples and
//! an index `j` in the preprocessed time base refers to the window that starts
//! at raw sample `j`. Annotations are interpreted in that time base.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Sensors on the catheter.
pub const SENSOR_COUNT: usize = 36;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 50.0;
pub const DEFAULT_SMOOTHING_WINDOW: usize = 30;

pub const PRESSURE_FLOOR_MMHG: f64 = -200.0;
pub const PRESSURE_CEIL_MMHG: f64 = 300.0;
pub const SCALED_MAX: f64 = 255.0;

/// Name of the smoothing alignment written to artifact metadata.
pub const SMOOTHING_ALIGNMENT: &str = "trailing";

/// A sensors x samples pressure matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManometryRecording {
    pub patient_id: String,
    pub sample_rate: f64,
    values: Matrix,
    preprocessed: bool,
    /// Moving-average width applied by [`preprocess_recording`], when known.
    pub smoothing_window: Option<usize>,
}

impl ManometryRecording {
    /// Wraps raw pressure values (mmHg).
    pub fn new(patient_id: impl Into<String>, sample_rate: f64, values: Matrix) -> Result<Self> {
        Self::build(patient_id.into(), sample_rate, values, false)
    }

    /// Wraps values that are already smoothed and scaled into `[0, 255]`.
    pub fn from_preprocessed(
        patient_id: impl Into<String>,
        sample_rate: f64,
        values: Matrix,
    ) -> Result<Self> {
        Self::build(patient_id.into(), sample_rate, values, true)
    }

    fn build(patient_id: String, sample_rate: f64, values: Matrix, preprocessed: bool) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::param("sample_rate", "must be positive and finite"));
        }
        if values.rows() == 0 {
            return Err(Error::data("recording has no sensors"));
        }
        if values.cols() == 0 {
            return Err(Error::data("recording has no samples"));
        }
        if preprocessed {
            if let Some(pos) = values
                .as_slice()
                .iter()
                .position(|v| !(0.0..=SCALED_MAX).contains(v))
            {
                let (r, c) = (pos / values.cols(), pos % values.cols());
                return Err(Error::data(format!(
                    "preprocessed value at sensor {r}, sample {c} lies outside [0, 255]"
                )));
            }
        }
        Ok(ManometryRecording {
            patient_id,
            sample_rate,
            values,
            preprocessed,
            smoothing_window: None,
        })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }

    pub fn sensors(&self) -> usize {
        self.values.rows()
    }

    pub fn samples(&self) -> usize {
        self.values.cols()
    }

    pub fn is_preprocessed(&self) -> bool {
        self.preprocessed
    }

    pub(crate) fn require_preprocessed(&self) -> Result<()> {
        if self.preprocessed {
            Ok(())
        } else {
            Err(Error::state(format!(
                "recording `{}` must be preprocessed first",
                self.patient_id
            )))
        }
    }
}

/// Ground-truth swallow starts for one recording.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub recording_id: String,
    starts: Vec<usize>,
}

impl AnnotationSet {
    pub fn new(recording_id: impl Into<String>, starts: Vec<usize>) -> Result<Self> {
        if let Some(i) = starts.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::data(format!(
                "annotation starts must be strictly increasing (index {} = {}, index {} = {})",
                i,
                starts[i],
                i + 1,
                starts[i + 1]
            )));
        }
        Ok(AnnotationSet {
            recording_id: recording_id.into(),
            starts,
        })
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Checks that every start lies within a recording of `samples` columns.
    pub fn check_range(&self, samples: usize) -> Result<()> {
        match self.starts.last() {
            Some(&last) if last >= samples => Err(Error::data(format!(
                "annotation start {last} lies beyond the last sample {}",
                samples.saturating_sub(1)
            ))),
            _ => Ok(()),
        }
    }
}

/// Trailing moving average along the time axis of every row.
pub fn moving_average_time(m: &Matrix, w: usize) -> Result<Matrix> {
    let t = m.cols();
    if w == 0 || w > t {
        return Err(Error::param(
            "w",
            format!("window {w} must lie in 1..={t}"),
        ));
    }
    let out_cols = t - w + 1;
    let mut out = Matrix::zeros(m.rows(), out_cols);
    for r in 0..m.rows() {
        moving_average_into(m.row(r), w, out.row_mut(r));
    }
    Ok(out)
}

/// Trailing moving average of a vector, length `len - w + 1`.
pub fn moving_average(x: &[f64], w: usize) -> Result<Vec<f64>> {
    if w == 0 || w > x.len() {
        return Err(Error::param(
            "w",
            format!("window {w} must lie in 1..={}", x.len()),
        ));
    }
    let mut out = alloc::vec![0.0; x.len() - w + 1];
    moving_average_into(x, w, &mut out);
    Ok(out)
}

// Each output is the plain window sum divided by `w`, so strict threshold
// comparisons downstream see the same value as the definition.
fn moving_average_into(x: &[f64], w: usize, out: &mut [f64]) {
    let wf = w as f64;
    for (j, o) in out.iter_mut().enumerate() {
        *o = x[j..j + w].iter().sum::<f64>() / wf;
    }
}

/// Maps one pressure value (mmHg) to the scaled range.
#[inline]
pub fn scale_pressure(mmhg: f64) -> f64 {
    let clipped = mmhg.clamp(PRESSURE_FLOOR_MMHG, PRESSURE_CEIL_MMHG);
    (clipped - PRESSURE_FLOOR_MMHG) * SCALED_MAX / (PRESSURE_CEIL_MMHG - PRESSURE_FLOOR_MMHG)
}

/// Inverse of [`scale_pressure`] on `[0, 255]`.
#[inline]
pub fn unscale_pressure(scaled: f64) -> f64 {
    scaled * (PRESSURE_CEIL_MMHG - PRESSURE_FLOOR_MMHG) / SCALED_MAX + PRESSURE_FLOOR_MMHG
}

/// Clips to `[-200, 300]` mmHg and maps linearly onto `[0, 255]`.
pub fn clip_and_scale(m: &Matrix) -> Result<Matrix> {
    if let Some(pos) = m.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!(
            "non-finite value at sensor {}, sample {}",
            pos / m.cols(),
            pos % m.cols()
        )));
    }
    Ok(m.map(scale_pressure))
}

/// Smooth, then clip and scale. Time axis shrinks to `t - w + 1`.
pub fn preprocess_recording(r: &ManometryRecording, w: usize) -> Result<ManometryRecording> {
    if r.preprocessed {
        return Err(Error::state(format!(
            "recording `{}` is already preprocessed",
            r.patient_id
        )));
    }
    let smoothed = moving_average_time(&r.values, w)?;
    let scaled = clip_and_scale(&smoothed)?;
    let mut out = ManometryRecording::from_preprocessed(r.patient_id.clone(), r.sample_rate, scaled)?;
    out.smoothing_window = Some(w);
    Ok(out)
}
