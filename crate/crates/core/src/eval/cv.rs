//! Patient-wise k-fold cross-validation of a detection pipeline.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matching::{match_events, MatchConfig};
use super::metrics::{compute_metrics, summarize, MetricSummary, Metrics};
use crate::detection::DetectionResult;
use crate::error::{Error, Result};
use crate::signal::{AnnotationSet, ManometryRecording};

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledRecording {
    pub recording: ManometryRecording,
    pub annotations: AnnotationSet,
}

/// Train-then-detect procedure evaluated by [`cross_validate`].
pub trait DetectionPipeline {
    type Model;

    fn train(&self, training: &[&LabeledRecording]) -> Result<Self::Model>;

    fn detect(&self, model: &Self::Model, recording: &ManometryRecording) -> Result<DetectionResult>;
}

/// Splits recording indices into `folds` groups: a seeded shuffle followed by
/// round-robin dealing, so fold sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, rng_seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::param("folds", "need at least 2 folds"));
    }
    if n < folds {
        return Err(Error::param(
            "folds",
            format!("{n} recordings cannot fill {folds} folds"),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    let mut out = alloc::vec![Vec::new(); folds];
    for (i, idx) in order.into_iter().enumerate() {
        out[i % folds].push(idx);
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldDetections {
    pub fold: usize,
    /// Indices of the held-out recordings.
    pub recordings: Vec<usize>,
    pub detections: Vec<DetectionResult>,
}

/// Trains on every recording outside fold `fold` and detects on those inside.
pub fn run_fold<P: DetectionPipeline>(
    data: &[LabeledRecording],
    folds: &[Vec<usize>],
    fold: usize,
    pipeline: &P,
) -> Result<FoldDetections> {
    let held_out = &folds[fold];
    let training: Vec<&LabeledRecording> = (0..data.len())
        .filter(|i| !held_out.contains(i))
        .map(|i| &data[i])
        .collect();
    let model = pipeline.train(&training)?;
    let detections = held_out
        .iter()
        .map(|&i| pipeline.detect(&model, &data[i].recording))
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldDetections {
        fold,
        recordings: held_out.clone(),
        detections,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub match_config: MatchConfig,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Metrics of the pooled counts over all folds.
    pub pooled: Metrics,
    pub per_fold: Vec<FoldMetrics>,
    /// Mean and population standard deviation of the per-fold metrics.
    pub mean_std: MetricSummary,
    /// Signed `predicted - true` offsets of all matched pairs.
    pub distances: Vec<i64>,
}

/// Scores groups of `(annotations, detection)` pairs; each group is one fold.
pub fn score_groups(groups: &[Vec<(&AnnotationSet, &DetectionResult)>], cfg: &MatchConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let mut per_fold = Vec::with_capacity(groups.len());
    let mut distances = Vec::new();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (fold, group) in groups.iter().enumerate() {
        let (mut ftp, mut ffp, mut ffn) = (0, 0, 0);
        for (truth, detection) in group {
            let m = match_events(truth.starts(), &detection.starts(), cfg)?;
            ftp += m.tp;
            ffp += m.fp;
            ffn += m.fn_;
            distances.extend(m.distances);
        }
        per_fold.push(FoldMetrics {
            fold,
            tp: ftp,
            fp: ffp,
            fn_: ffn,
            metrics: compute_metrics(ftp, ffp, ffn),
        });
        tp += ftp;
        fp += ffp;
        fn_ += ffn;
    }
    let folds: Vec<Metrics> = per_fold.iter().map(|f| f.metrics).collect();
    Ok(MetricsReport {
        match_config: *cfg,
        tp,
        fp,
        fn_,
        pooled: compute_metrics(tp, fp, fn_),
        mean_std: summarize(&folds),
        per_fold,
        distances,
    })
}

/// Scores fold detections against the annotations of `data`.
pub fn score_folds(data: &[LabeledRecording], folds: &[FoldDetections], cfg: &MatchConfig) -> Result<MetricsReport> {
    let groups: Vec<Vec<(&AnnotationSet, &DetectionResult)>> = folds
        .iter()
        .map(|f| {
            f.recordings
                .iter()
                .zip(&f.detections)
                .map(|(&i, d)| (&data[i].annotations, d))
                .collect()
        })
        .collect();
    score_groups(&groups, cfg)
}

pub fn cross_validate<P: DetectionPipeline>(
    data: &[LabeledRecording],
    folds: usize,
    pipeline: &P,
    cfg: &MatchConfig,
    rng_seed: u64,
) -> Result<MetricsReport> {
    let assignment = fold_assignment(data.len(), folds, rng_seed)?;
    let detections = (0..folds)
        .map(|k| run_fold(data, &assignment, k, pipeline))
        .collect::<Result<Vec<_>>>()?;
    score_folds(data, &detections, cfg)
}
