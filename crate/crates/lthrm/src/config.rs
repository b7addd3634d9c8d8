//! `RunConfig`: every tunable under a namespaced TOML key.
//!
//! ```toml
//! seed = 7
//! [ml]
//! stride = 10
//! ```
//!
//! Missing keys take their defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};

use lthrm_core::baseline::BaselineParams;
use lthrm_core::cluster::{ClusterConfig, Method};
use lthrm_core::eval::{MatchConfig, MatchMode};
use lthrm_core::ml::{MlParams, TrainingMeta, DEFAULT_INPUT_SIDE};
use lthrm_core::signal::{DEFAULT_SAMPLE_RATE_HZ, DEFAULT_SMOOTHING_WINDOW};
use lthrm_core::synth::{SwallowTemplate, SynthConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub preprocess: PreprocessSection,
    pub synth: SynthSection,
    pub baseline: BaselineSection,
    pub ml: MlSection,
    pub cluster: ClusterSection,
    pub eval: EvalSection,
    pub paths: PathsSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub w: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub recordings: usize,
    pub duration_s: f64,
    pub sample_rate: f64,
    pub swallows: usize,
    pub min_gap_s: f64,
    pub noise_std: f64,
    pub mix_normal: f64,
    pub mix_simultaneous: f64,
    pub mix_weak: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub binarize_threshold: f64,
    pub vertical_window: usize,
    pub smooth_window: usize,
    pub peak_height: f64,
    pub peak_distance: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlSection {
    pub input_side: usize,
    pub stride: usize,
    pub smooth_window: usize,
    pub threshold: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub neg_per_pos: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub method: Method,
    pub k_min: usize,
    pub k_max: usize,
    pub main_fraction: f64,
    pub stage2_k: usize,
    pub n_components: usize,
    pub blur_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub d: usize,
    pub mode: MatchMode,
    pub folds: usize,
    pub bin_width: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Default output directory for commands run without `--out`.
    pub out_dir: Option<PathBuf>,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            w: DEFAULT_SMOOTHING_WINDOW,
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        let c = SynthConfig::default();
        let weight = |t: SwallowTemplate| {
            c.morphology_mix.iter().find(|(m, _)| *m == t).map_or(0.0, |(_, w)| *w)
        };
        SynthSection {
            recordings: 1,
            duration_s: c.duration_s,
            sample_rate: DEFAULT_SAMPLE_RATE_HZ,
            swallows: c.n_swallows,
            min_gap_s: c.min_gap_s,
            noise_std: c.noise_std,
            mix_normal: weight(SwallowTemplate::Normal),
            mix_simultaneous: weight(SwallowTemplate::Simultaneous),
            mix_weak: weight(SwallowTemplate::Weak),
        }
    }
}

impl Default for BaselineSection {
    fn default() -> Self {
        let p = BaselineParams::default();
        BaselineSection {
            binarize_threshold: p.binarize_threshold,
            vertical_window: p.vertical_window,
            smooth_window: p.smooth_window,
            peak_height: p.peak_height,
            peak_distance: p.peak_distance,
        }
    }
}

impl Default for MlSection {
    fn default() -> Self {
        let p = MlParams::default();
        let t = TrainingMeta::default();
        MlSection {
            input_side: DEFAULT_INPUT_SIDE,
            stride: p.stride,
            smooth_window: p.smooth_window,
            threshold: p.threshold,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            neg_per_pos: 1,
        }
    }
}

impl Default for ClusterSection {
    fn default() -> Self {
        let c = ClusterConfig::default();
        ClusterSection {
            method: c.method,
            k_min: c.k_min,
            k_max: c.k_max,
            main_fraction: c.main_fraction,
            stage2_k: c.stage2_k,
            n_components: c.n_components,
            blur_sigma: c.blur_sigma,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        let m = MatchConfig::default();
        EvalSection {
            d: m.d,
            mode: m.mode,
            folds: lthrm_core::eval::DEFAULT_FOLDS,
            bin_width: 10,
        }
    }
}

/// Seed of the `index`-th stream derived from `seed` (SplitMix64 step).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::usage(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every section against the owning module's preconditions.
    pub fn validate(&self) -> Result<()> {
        let usage = |section: &str, e: lthrm_core::Error| Error::usage(format!("[{section}] {e}"));
        if self.preprocess.w == 0 {
            return Err(Error::usage("[preprocess] w must be positive"));
        }
        if self.synth.recordings == 0 {
            return Err(Error::usage("[synth] recordings must be positive"));
        }
        self.synth_config(0).validate().map_err(|e| usage("synth", e))?;
        self.baseline_params()
            .validate(lthrm_core::signal::SENSOR_COUNT)
            .map_err(|e| usage("baseline", e))?;
        self.ml_params().validate().map_err(|e| usage("ml", e))?;
        self.training_meta().validate().map_err(|e| usage("ml", e))?;
        lthrm_core::ml::Architecture::new(self.ml.input_side).map_err(|e| usage("ml", e))?;
        if self.ml.neg_per_pos == 0 {
            return Err(Error::usage("[ml] neg_per_pos must be positive"));
        }
        self.cluster_config().validate().map_err(|e| usage("cluster", e))?;
        self.match_config().validate().map_err(|e| usage("eval", e))?;
        if self.eval.folds < 2 {
            return Err(Error::usage("[eval] folds must be at least 2"));
        }
        if self.eval.bin_width == 0 {
            return Err(Error::usage("[eval] bin_width must be positive"));
        }
        Ok(())
    }

    /// Synthesis settings of the `index`-th recording.
    pub fn synth_config(&self, index: u64) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            duration_s: s.duration_s,
            sample_rate: s.sample_rate,
            n_swallows: s.swallows,
            min_gap_s: s.min_gap_s,
            noise_std: s.noise_std,
            morphology_mix: vec![
                (SwallowTemplate::Normal, s.mix_normal),
                (SwallowTemplate::Simultaneous, s.mix_simultaneous),
                (SwallowTemplate::Weak, s.mix_weak),
            ],
            rng_seed: derive_seed(self.seed, index),
        }
    }

    pub fn baseline_params(&self) -> BaselineParams {
        let b = &self.baseline;
        BaselineParams {
            binarize_threshold: b.binarize_threshold,
            vertical_window: b.vertical_window,
            smooth_window: b.smooth_window,
            peak_height: b.peak_height,
            peak_distance: b.peak_distance,
        }
    }

    pub fn ml_params(&self) -> MlParams {
        MlParams {
            stride: self.ml.stride,
            smooth_window: self.ml.smooth_window,
            threshold: self.ml.threshold,
        }
    }

    pub fn training_meta(&self) -> TrainingMeta {
        TrainingMeta {
            learning_rate: self.ml.learning_rate,
            batch_size: self.ml.batch_size,
            epochs: self.ml.epochs,
            seed: self.seed,
        }
    }

    pub fn cluster_config(&self) -> ClusterConfig {
        let c = &self.cluster;
        ClusterConfig {
            method: c.method,
            k_min: c.k_min,
            k_max: c.k_max,
            main_fraction: c.main_fraction,
            stage2_k: c.stage2_k,
            n_components: c.n_components,
            blur_sigma: c.blur_sigma,
        }
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            d: self.eval.d,
            mode: self.eval.mode,
        }
    }
}
