//! Threshold-based swallow detector.
//!
//! Binarize the preprocessed matrix, take a moving sum across neighbouring
//! sensors, sum the result over sensors into an activity trace, smooth it in
//! time, and report its peaks. Peaks mark a point during a swallow rather
//! than its onset.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::detection::{params_digest, DetectedEvent, DetectionResult};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::signal::{moving_average, scale_pressure, ManometryRecording, SCALED_MAX};

pub const METHOD_TAG: &str = "baseline";

/// The binarization constant as written for the scaled matrix.
pub const LITERAL_SCALED_THRESHOLD: f64 = 80.0;
/// The same constant read as a pressure.
pub const THRESHOLD_MMHG: f64 = 80.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    /// Binarization threshold in scaled units `[0, 255]`.
    pub binarize_threshold: f64,
    pub vertical_window: usize,
    pub smooth_window: usize,
    pub peak_height: f64,
    pub peak_distance: usize,
}

impl Default for BaselineParams {
    /// 80 mmHg (142.8 scaled). Resting pressure already sits above 80 in
    /// scaled units, so the literal scaled constant binarizes almost every cell;
    /// use [`BaselineParams::literal`] for that reading.
    fn default() -> Self {
        BaselineParams {
            binarize_threshold: scale_pressure(THRESHOLD_MMHG),
            ..Self::literal()
        }
    }
}

impl BaselineParams {
    /// Every constant taken verbatim, threshold 80 in scaled units.
    pub fn literal() -> Self {
        BaselineParams {
            binarize_threshold: LITERAL_SCALED_THRESHOLD,
            vertical_window: 20,
            smooth_window: 100,
            peak_height: 20.0,
            peak_distance: 200,
        }
    }

    pub fn validate(&self, sensors: usize) -> Result<()> {
        if !(self.binarize_threshold > 0.0) {
            return Err(Error::param("binarize_threshold", "must be positive"));
        }
        if self.vertical_window == 0 || self.vertical_window > sensors {
            return Err(Error::param(
                "vertical_window",
                format!("must lie in 1..={sensors}"),
            ));
        }
        if self.smooth_window == 0 {
            return Err(Error::param("smooth_window", "must be positive"));
        }
        if !(self.peak_height > 0.0) {
            return Err(Error::param("peak_height", "must be positive"));
        }
        if self.peak_distance == 0 {
            return Err(Error::param("peak_distance", "must be positive"));
        }
        Ok(())
    }

    pub fn digest(&self) -> alloc::string::String {
        params_digest(&[
            ("binarize_threshold", self.binarize_threshold),
            ("vertical_window", self.vertical_window as f64),
            ("smooth_window", self.smooth_window as f64),
            ("peak_height", self.peak_height),
            ("peak_distance", self.peak_distance as f64),
        ])
    }
}

/// Cells strictly above `threshold` become 1, the rest 0.
pub fn binarize_pressure(m: &Matrix, threshold: f64) -> Result<Matrix> {
    if m.as_slice().iter().any(|v| !(0.0..=SCALED_MAX).contains(v)) {
        return Err(Error::state("binarization expects preprocessed values in [0, 255]"));
    }
    Ok(m.map(|v| if v > threshold { 1.0 } else { 0.0 }))
}

/// Moving sum of `w` adjacent sensors, summed over all window positions.
///
/// Only the `sensors - w + 1` complete windows exist, so `r_j` sums those.
pub fn vertical_activity(binary: &Matrix, w: usize) -> Result<Vec<f64>> {
    let sensors = binary.rows();
    if w == 0 || w > sensors {
        return Err(Error::param(
            "vertical_window",
            format!("window {w} must lie in 1..={sensors}"),
        ));
    }
    // Row i lies in windows starting at max(0, i+1-w)..=min(i, sensors-w).
    let coverage: Vec<f64> = (0..sensors)
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let hi = i.min(sensors - w);
            (hi + 1 - lo) as f64
        })
        .collect();
    let mut r = alloc::vec![0.0; binary.cols()];
    for (i, &weight) in coverage.iter().enumerate() {
        for (acc, &b) in r.iter_mut().zip(binary.row(i)) {
            *acc += weight * b;
        }
    }
    Ok(r)
}

pub fn smooth_activity(r: &[f64], w: usize) -> Result<Vec<f64>> {
    moving_average(r, w).map_err(|_| {
        Error::param(
            "smooth_window",
            format!("window {w} must lie in 1..={}", r.len()),
        )
    })
}

/// Local maxima strictly above `height`, thinned so that kept peaks are more
/// than `distance` apart. Taller peaks win; equal heights keep the earlier
/// index. A flat-topped peak is reported at its first index.
pub fn find_peaks(x: &[f64], height: f64, distance: usize) -> Vec<usize> {
    let n = x.len();
    let mut candidates = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead + 1 < n && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                if x[i] > height {
                    candidates.push(i);
                }
                i = ahead;
            }
        }
        i += 1;
    }

    let mut order = candidates;
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for p in order {
        if kept.iter().all(|&k| k.abs_diff(p) > distance) {
            kept.push(p);
        }
    }
    kept.sort_unstable();
    kept
}

pub fn detect_baseline(r: &ManometryRecording, p: &BaselineParams) -> Result<DetectionResult> {
    r.require_preprocessed()?;
    p.validate(r.sensors())?;
    let binary = binarize_pressure(r.values(), p.binarize_threshold)?;
    let activity = vertical_activity(&binary, p.vertical_window)?;
    let smoothed = smooth_activity(&activity, p.smooth_window.min(activity.len()))?;
    let peaks = find_peaks(&smoothed, p.peak_height, p.peak_distance);

    let max_activity = ((r.sensors() - p.vertical_window + 1) * p.vertical_window) as f64;
    let last = r.samples() - 1;
    let events = peaks
        .into_iter()
        .map(|j| DetectedEvent {
            start: j,
            span: (j, (j + p.smooth_window - 1).min(last)),
            confidence: (smoothed[j] / max_activity).clamp(0.0, 1.0),
        })
        .collect();
    Ok(DetectionResult {
        recording_id: r.patient_id.clone(),
        events,
        method: METHOD_TAG.into(),
        params_digest: p.digest(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn binarize_is_strict() {
        let m = Matrix::from_rows(&[vec![80.0, 81.0, 0.0, 80.000001]]).unwrap();
        let b = binarize_pressure(&m, 80.0).unwrap();
        assert_eq!(b.row(0), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn binarize_rejects_raw_pressure() {
        let m = Matrix::from_rows(&[vec![-10.0, 300.0]]).unwrap();
        assert!(matches!(
            binarize_pressure(&m, 80.0),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn vertical_activity_full_column() {
        let b = Matrix::filled(36, 3, 1.0);
        assert_eq!(vertical_activity(&b, 20).unwrap(), vec![340.0; 3]);
    }

    #[test]
    fn vertical_activity_single_sensor() {
        // Row index 4 (the fifth sensor) lies in windows starting at 0..=4.
        let mut b = Matrix::zeros(36, 1);
        b[(4, 0)] = 1.0;
        assert_eq!(vertical_activity(&b, 20).unwrap(), vec![5.0]);
        assert!(vertical_activity(&b, 37).is_err());
    }

    #[test]
    fn smoothing_impulse_gives_plateau() {
        let mut r = vec![0.0; 400];
        r[200] = 100.0;
        let s = smooth_activity(&r, 100).unwrap();
        assert_eq!(s.len(), 301);
        let ones: Vec<usize> = (0..s.len()).filter(|&j| (s[j] - 1.0).abs() < 1e-12).collect();
        assert_eq!(ones.len(), 100);
        assert_eq!(ones[0], 101);
        assert_eq!(*ones.last().unwrap(), 200);
    }

    #[test]
    fn peaks_closer_than_distance_keep_taller() {
        let mut x = vec![0.0; 400];
        x[100] = 25.0;
        x[250] = 22.0;
        assert_eq!(find_peaks(&x, 20.0, 200), vec![100]);
    }

    #[test]
    fn peak_height_is_strict() {
        let mut x = vec![0.0; 10];
        x[5] = 20.0;
        assert!(find_peaks(&x, 20.0, 200).is_empty());
        x[5] = 20.000001;
        assert_eq!(find_peaks(&x, 20.0, 200), vec![5]);
    }

    #[test]
    fn peaks_far_apart_both_kept() {
        let mut x = vec![0.0; 500];
        x[50] = 30.0;
        x[350] = 30.0;
        assert_eq!(find_peaks(&x, 20.0, 200), vec![50, 350]);
    }

    #[test]
    fn plateau_reports_first_index() {
        let x = [0.0, 1.0, 5.0, 5.0, 5.0, 2.0, 0.0];
        assert_eq!(find_peaks(&x, 0.5, 1), vec![2]);
        // Rising into the end of the signal is not a peak.
        assert!(find_peaks(&[0.0, 1.0, 2.0, 2.0], 0.0, 1).is_empty());
    }

    #[test]
    fn default_threshold_is_80_mmhg() {
        let p = BaselineParams::default();
        assert!((p.binarize_threshold - 142.8).abs() < 1e-12);
        assert_eq!(BaselineParams::literal().binarize_threshold, 80.0);
    }

    #[test]
    fn constant_below_threshold_gives_nothing() {
        let r = ManometryRecording::from_preprocessed("r", 50.0, Matrix::filled(36, 2000, 50.0))
            .unwrap();
        let d = detect_baseline(&r, &BaselineParams::default()).unwrap();
        assert!(d.events.is_empty());
        assert_eq!(d.method, "baseline");
    }
}
