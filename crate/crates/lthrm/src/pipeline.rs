//! Parallel drivers around the core algorithms.
//!
//! Work is split with rayon and gathered back in input order, so results are
//! identical to the sequential core functions regardless of thread count.

use lthrm_core::baseline::{detect_baseline, BaselineParams};
use lthrm_core::cluster::{cluster_features, ClusterConfig, ClusterRun, SwallowFeature};
use lthrm_core::eval::{
    fold_assignment, run_fold, score_folds, DetectionPipeline, FoldDetections, LabeledRecording,
    MatchConfig, MetricsReport,
};
use lthrm_core::ml::detect::events_from_inference;
use lthrm_core::ml::{
    extract_training_windows, train_classifier, window_starts, ClassifierModel, InferenceOutput,
    MlParams, TrainingMeta, WindowClassifier, WindowOrigin, WINDOW_LEN,
};
use lthrm_core::{DetectionResult, ManometryRecording, Result};
use rayon::prelude::*;

use crate::config::derive_seed;

/// Classifies every window position, in parallel.
pub fn parallel_inference(model: &ClassifierModel, r: &ManometryRecording, stride: usize) -> Result<InferenceOutput> {
    if !r.is_preprocessed() {
        return Err(lthrm_core::Error::InvalidState("inference expects a preprocessed recording".into()));
    }
    let starts = window_starts(r.samples(), model.window_len(), stride)?;
    let results: Vec<_> = starts
        .par_iter()
        .map(|&s| model.classify_at(r.values(), s))
        .collect::<Result<_>>()?;
    Ok(InferenceOutput {
        classes: results.iter().map(|c| c.class).collect(),
        confidences: results.iter().map(|c| c.confidence).collect(),
        window_starts: starts,
    })
}

/// Same output as `lthrm_core::ml::detect_ml`.
pub fn detect_ml_parallel(model: &ClassifierModel, r: &ManometryRecording, params: &MlParams) -> Result<DetectionResult> {
    params.validate()?;
    let inference = parallel_inference(model, r, params.stride)?;
    events_from_inference(&inference, params, &r.patient_id, Some(&model.digest()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlTraining {
    pub meta: TrainingMeta,
    pub input_side: usize,
    pub neg_per_pos: usize,
}

/// Trains one classifier on windows cut from every labeled recording.
/// Negative sampling of the `i`-th recording uses a seed derived from
/// `meta.seed` and `i`.
pub fn train_ml(data: &[&LabeledRecording], t: &MlTraining) -> Result<ClassifierModel> {
    let per_recording: Vec<_> = data
        .par_iter()
        .enumerate()
        .map(|(i, l)| {
            extract_training_windows(&l.recording, &l.annotations, t.neg_per_pos, derive_seed(t.meta.seed, i as u64))
        })
        .collect::<Result<_>>()?;
    let mut windows = Vec::new();
    for tw in per_recording {
        if tw.skipped_positives > 0 || tw.negative_shortfall > 0 {
            log::warn!(
                "{} positives skipped, {} negatives short",
                tw.skipped_positives,
                tw.negative_shortfall
            );
        }
        windows.extend(tw.windows);
    }
    train_classifier(&windows, &t.meta, t.input_side)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlPipeline {
    pub training: MlTraining,
    pub params: MlParams,
}

impl DetectionPipeline for MlPipeline {
    type Model = ClassifierModel;

    fn train(&self, training: &[&LabeledRecording]) -> Result<ClassifierModel> {
        train_ml(training, &self.training)
    }

    fn detect(&self, model: &ClassifierModel, r: &ManometryRecording) -> Result<DetectionResult> {
        detect_ml_parallel(model, r, &self.params)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselinePipeline(pub BaselineParams);

impl DetectionPipeline for BaselinePipeline {
    type Model = ();

    fn train(&self, _: &[&LabeledRecording]) -> Result<()> {
        Ok(())
    }

    fn detect(&self, _: &(), r: &ManometryRecording) -> Result<DetectionResult> {
        detect_baseline(r, &self.0)
    }
}

/// Runs the folds in parallel; same output as sequential cross-validation.
pub fn cross_validate_folds<P>(data: &[LabeledRecording], folds: usize, pipeline: &P, rng_seed: u64) -> Result<Vec<FoldDetections>>
where
    P: DetectionPipeline + Sync,
{
    let assignment = fold_assignment(data.len(), folds, rng_seed)?;
    (0..folds)
        .into_par_iter()
        .map(|k| run_fold(data, &assignment, k, pipeline))
        .collect()
}

pub fn cross_validate_parallel<P>(
    data: &[LabeledRecording],
    folds: usize,
    pipeline: &P,
    cfg: &MatchConfig,
    rng_seed: u64,
) -> Result<MetricsReport>
where
    P: DetectionPipeline + Sync,
{
    score_folds(data, &cross_validate_folds(data, folds, pipeline, rng_seed)?, cfg)
}

/// Swallow windows `[start, start + 500)` with their features. Events whose
/// window runs past the recording end are returned separately.
pub fn prepare_features(
    events: &[(&ManometryRecording, usize)],
    blur_sigma: f64,
) -> Result<(Vec<SwallowFeature>, Vec<WindowOrigin>)> {
    let mut skipped = Vec::new();
    let mut kept = Vec::new();
    for &(r, start) in events {
        let origin = WindowOrigin {
            recording_id: r.patient_id.clone(),
            start,
        };
        if start + WINDOW_LEN > r.samples() {
            skipped.push(origin);
        } else {
            kept.push((r, origin));
        }
    }
    let features = kept
        .into_par_iter()
        .map(|(r, origin)| {
            let window = r.values().columns(origin.start..origin.start + WINDOW_LEN);
            SwallowFeature::new(origin, window, blur_sigma)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((features, skipped))
}

pub fn cluster_events(
    events: &[(&ManometryRecording, usize)],
    cfg: &ClusterConfig,
) -> Result<(Vec<SwallowFeature>, Vec<WindowOrigin>, ClusterRun)> {
    cfg.validate()?;
    let (mut features, skipped) = prepare_features(events, cfg.blur_sigma)?;
    let run = cluster_features(&mut features, cfg)?;
    Ok((features, skipped, run))
}
