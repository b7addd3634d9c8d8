//! Precision, recall, F1 and their spread across folds.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False when there were no predictions and precision was set to 0.
    pub precision_defined: bool,
    /// False when there were no true events and recall was set to 0.
    pub recall_defined: bool,
}

pub fn compute_metrics(tp: usize, fp: usize, fn_: usize) -> Metrics {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            (0.0, false)
        } else {
            (num as f64 / den as f64, true)
        }
    };
    let (precision, precision_defined) = ratio(tp, tp + fp);
    let (recall, recall_defined) = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Metrics {
        precision,
        recall,
        f1,
        precision_defined,
        recall_defined,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd::default();
    }
    if values.iter().all(|&v| v == values[0]) {
        return MeanStd {
            mean: values[0],
            std: 0.0,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd {
        mean,
        std: libm::sqrt(var),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
}

pub fn summarize(per_fold: &[Metrics]) -> MetricSummary {
    let pick = |f: fn(&Metrics) -> f64| per_fold.iter().map(f).collect::<Vec<f64>>();
    MetricSummary {
        precision: mean_std(&pick(|m| m.precision)),
        recall: mean_std(&pick(|m| m.recall)),
        f1: mean_std(&pick(|m| m.f1)),
    }
}
