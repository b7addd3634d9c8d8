//! Labeled synthetic recordings standing in for clinical data.
//!
//! Each swallow is a pressure wave: sensor `i` carries a Gaussian-in-time
//! bump whose centre is delayed linearly with `i`, on top of a 10 mmHg
//! resting baseline and white Gaussian noise.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::signal::{AnnotationSet, ManometryRecording, DEFAULT_SAMPLE_RATE_HZ, SENSOR_COUNT};

pub const BASELINE_MMHG: f64 = 10.0;
/// Delay (s) between the annotated start and the first sensor's peak.
const ONSET_LEAD_S: f64 = 1.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwallowTemplate {
    /// Peristaltic wave travelling the full length in 4-6 s.
    Normal,
    /// Fast, near-simultaneous contraction (2-3 s over all sensors).
    Simultaneous,
    /// Low-amplitude wave that dies out two thirds of the way down.
    Weak,
}

impl SwallowTemplate {
    pub const ALL: [SwallowTemplate; 3] = [Self::Normal, Self::Simultaneous, Self::Weak];

    pub fn name(self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::Simultaneous => "simultaneous",
            Self::Weak => "weak",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    fn shape(self) -> WaveShape {
        match self {
            Self::Normal => WaveShape {
                amplitude_mmhg: (100.0, 150.0),
                propagation_s: (4.0, 6.0),
                width_s: 0.5,
                active_fraction: 1.0,
            },
            Self::Simultaneous => WaveShape {
                amplitude_mmhg: (110.0, 150.0),
                propagation_s: (2.0, 3.0),
                width_s: 0.7,
                active_fraction: 1.0,
            },
            Self::Weak => WaveShape {
                amplitude_mmhg: (95.0, 120.0),
                propagation_s: (4.0, 6.0),
                width_s: 0.6,
                active_fraction: 2.0 / 3.0,
            },
        }
    }
}

struct WaveShape {
    amplitude_mmhg: (f64, f64),
    propagation_s: (f64, f64),
    /// Gaussian sigma in seconds.
    width_s: f64,
    active_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub sample_rate: f64,
    pub n_swallows: usize,
    pub min_gap_s: f64,
    pub noise_std: f64,
    pub morphology_mix: Vec<(SwallowTemplate, f64)>,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            duration_s: 1800.0,
            sample_rate: DEFAULT_SAMPLE_RATE_HZ,
            n_swallows: 40,
            min_gap_s: 12.0,
            noise_std: 5.0,
            morphology_mix: alloc::vec![
                (SwallowTemplate::Normal, 0.6),
                (SwallowTemplate::Simultaneous, 0.2),
                (SwallowTemplate::Weak, 0.2),
            ],
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::param("sample_rate", "must be positive"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::param("duration_s", "must be positive"));
        }
        if !(self.min_gap_s > 0.0) {
            return Err(Error::param("min_gap_s", "must be positive"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::param("noise_std", "must be non-negative"));
        }
        if self.n_swallows as f64 * self.min_gap_s > self.duration_s {
            return Err(Error::param(
                "n_swallows",
                alloc::format!(
                    "{} swallows at least {} s apart do not fit in {} s",
                    self.n_swallows,
                    self.min_gap_s,
                    self.duration_s
                ),
            ));
        }
        if self.morphology_mix.iter().any(|&(_, w)| !(w >= 0.0)) {
            return Err(Error::param("morphology_mix", "weights must be non-negative"));
        }
        if self.morphology_mix.iter().map(|&(_, w)| w).sum::<f64>() <= 0.0 {
            return Err(Error::param("morphology_mix", "weights must sum to a positive value"));
        }
        Ok(())
    }

    fn samples(&self) -> usize {
        libm::round(self.duration_s * self.sample_rate) as usize
    }

    fn gap_samples(&self) -> usize {
        libm::ceil(self.min_gap_s * self.sample_rate) as usize
    }
}

/// Output of [`generate_recording`].
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticRecording {
    pub recording: ManometryRecording,
    pub annotations: AnnotationSet,
    /// Template of each annotated swallow, aligned with the annotation starts.
    pub templates: Vec<SwallowTemplate>,
}

pub fn generate_recording(cfg: &SynthConfig, recording_id: &str) -> Result<SyntheticRecording> {
    cfg.validate()?;
    let t = cfg.samples();
    let gap = cfg.gap_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    // Starts: n sorted offsets in the slack, each shifted by its rank times the gap.
    // The tail keeps one gap free so every event fits inside the recording.
    let mut starts = Vec::with_capacity(cfg.n_swallows);
    if cfg.n_swallows > 0 {
        let needed = cfg.n_swallows * gap;
        let slack = t.saturating_sub(needed);
        let mut offsets: Vec<usize> = (0..cfg.n_swallows)
            .map(|_| rng.random_range(0..=slack))
            .collect();
        offsets.sort_unstable();
        starts.extend(offsets.iter().enumerate().map(|(i, &o)| o + i * gap));
    }

    let total_weight: f64 = cfg.morphology_mix.iter().map(|&(_, w)| w).sum();
    let mut templates = Vec::with_capacity(starts.len());
    let mut values = Matrix::filled(SENSOR_COUNT, t, BASELINE_MMHG);
    for &start in &starts {
        let mut pick = rng.random_range(0.0..total_weight);
        let mut template = cfg.morphology_mix[0].0;
        for &(tpl, w) in &cfg.morphology_mix {
            if pick < w {
                template = tpl;
                break;
            }
            pick -= w;
        }
        templates.push(template);
        add_wave(&mut values, start, template, cfg.sample_rate, &mut rng);
    }

    if cfg.noise_std > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_std)
            .map_err(|_| Error::param("noise_std", "invalid standard deviation"))?;
        for v in values.as_mut_slice() {
            *v += noise.sample(&mut rng);
        }
    }

    let recording = ManometryRecording::new(recording_id, cfg.sample_rate, values)?;
    let annotations = AnnotationSet::new(recording_id, starts)?;
    Ok(SyntheticRecording {
        recording,
        annotations,
        templates,
    })
}

fn add_wave(
    values: &mut Matrix,
    start: usize,
    template: SwallowTemplate,
    sample_rate: f64,
    rng: &mut ChaCha8Rng,
) {
    let shape = template.shape();
    let amplitude = rng.random_range(shape.amplitude_mmhg.0..=shape.amplitude_mmhg.1);
    let propagation = rng.random_range(shape.propagation_s.0..=shape.propagation_s.1) * sample_rate;
    let sigma = shape.width_s * sample_rate;
    let lead = ONSET_LEAD_S * sample_rate;
    let sensors = values.rows();
    let active = libm::ceil(shape.active_fraction * sensors as f64) as usize;
    let t = values.cols();

    for sensor in 0..active.min(sensors) {
        let centre = start as f64 + lead + propagation * sensor as f64 / (sensors - 1) as f64;
        let lo = libm::floor(centre - 5.0 * sigma).max(0.0) as usize;
        let hi = (libm::ceil(centre + 5.0 * sigma) as usize).min(t);
        let row = values.row_mut(sensor);
        for (j, v) in row.iter_mut().enumerate().take(hi).skip(lo) {
            let z = (j as f64 - centre) / sigma;
            *v += amplitude * libm::exp(-0.5 * z * z);
        }
    }
}
