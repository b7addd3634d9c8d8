//! Trainable window classifier: the reference CNN plus its training loop.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cnn::{softmax, Architecture};
use super::windows::{SwallowWindow, LABEL_NON_SWALLOW, LABEL_SWALLOW, WINDOW_LEN};
use crate::detection::f64_digest;
use crate::error::{Error, Result};
use crate::image::resize_bilinear_region;
use crate::matrix::Matrix;
use crate::signal::SCALED_MAX;

pub const MODEL_VERSION: u32 = 1;
/// Input side used by default; large enough for the synthetic morphologies
/// while training in seconds.
pub const DEFAULT_INPUT_SIDE: usize = 64;
/// Input side of the ImageNet-style backbones.
pub const BACKBONE_INPUT_SIDE: usize = 224;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainingMeta {
    fn default() -> Self {
        TrainingMeta {
            learning_rate: 3e-3,
            batch_size: 128,
            epochs: 20,
            seed: 0,
        }
    }
}

impl TrainingMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be positive"));
        }
        Ok(())
    }
}

/// Predicted class and the softmax probability of that class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub class: u8,
    pub confidence: f64,
}

impl Classification {
    /// Picks the larger probability; an exact tie resolves to class 0.
    pub fn from_probabilities(p: [f64; 2]) -> Self {
        if p[1] > p[0] {
            Classification {
                class: LABEL_SWALLOW,
                confidence: p[1],
            }
        } else {
            Classification {
                class: LABEL_NON_SWALLOW,
                confidence: p[0],
            }
        }
    }
}

/// Anything that labels a fixed-size pressure window as swallow / non-swallow.
pub trait WindowClassifier {
    /// Window length (columns) the classifier expects.
    fn window_len(&self) -> usize {
        WINDOW_LEN
    }

    fn classify(&self, window: &Matrix) -> Result<Classification>;

    /// Stable identifier of the classifier's parameters, folded into
    /// detection digests.
    fn identity(&self) -> Option<alloc::string::String> {
        None
    }

    /// Classifies `values[.., start..start + window_len]`.
    fn classify_at(&self, values: &Matrix, start: usize) -> Result<Classification> {
        self.classify(&values.columns(start..start + self.window_len()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub version: u32,
    pub arch: Architecture,
    /// Expected window shape (sensors, samples).
    pub window_shape: (usize, usize),
    pub params: Vec<f64>,
    pub training: TrainingMeta,
    pub epoch_losses: Vec<f64>,
    /// Running training accuracy over each epoch.
    pub epoch_accuracy: Vec<f64>,
}

impl ClassifierModel {
    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::data(alloc::format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                self.version
            )));
        }
        self.arch.validate()?;
        if self.params.len() != self.arch.param_count() {
            return Err(Error::data(alloc::format!(
                "model holds {} parameters, architecture needs {}",
                self.params.len(),
                self.arch.param_count()
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the parameter bit patterns.
    pub fn digest(&self) -> alloc::string::String {
        f64_digest(&self.params)
    }

    pub fn probabilities_at(&self, values: &Matrix, start: usize) -> Result<[f64; 2]> {
        let input = model_input(values, start..start + self.window_shape.1, self.arch.input_side)?;
        Ok(softmax(&self.arch.logits(&self.params, &input)))
    }
}

impl WindowClassifier for ClassifierModel {
    fn window_len(&self) -> usize {
        self.window_shape.1
    }

    fn identity(&self) -> Option<alloc::string::String> {
        Some(self.digest())
    }

    fn classify(&self, window: &Matrix) -> Result<Classification> {
        if window.shape() != self.window_shape {
            return Err(Error::data(alloc::format!(
                "window shape {:?} does not match model input {:?}",
                window.shape(),
                self.window_shape
            )));
        }
        self.classify_at(window, 0)
    }

    fn classify_at(&self, values: &Matrix, start: usize) -> Result<Classification> {
        if values.rows() != self.window_shape.0 || start + self.window_shape.1 > values.cols() {
            return Err(Error::data(alloc::format!(
                "window at {start} of a {:?} matrix does not fit model input {:?}",
                values.shape(),
                self.window_shape
            )));
        }
        Ok(Classification::from_probabilities(
            self.probabilities_at(values, start)?,
        ))
    }
}

/// Resized, normalized network input: `side x side` values in `[-1, 1]`.
pub fn model_input(values: &Matrix, cols: core::ops::Range<usize>, side: usize) -> Result<Vec<f64>> {
    let resized = resize_bilinear_region(values, cols, side, side)?;
    let half = SCALED_MAX / 2.0;
    Ok(resized.as_slice().iter().map(|v| v / half - 1.0).collect())
}

/// Mini-batch SGD on mean cross-entropy. Fully determined by `meta.seed`.
pub fn train_classifier(
    data: &[SwallowWindow],
    meta: &TrainingMeta,
    input_side: usize,
) -> Result<ClassifierModel> {
    meta.validate()?;
    let arch = Architecture::new(input_side)?;
    let Some(first) = data.first() else {
        return Err(Error::data("no training windows"));
    };
    let window_shape = first.values.shape();
    if let Some(w) = data.iter().find(|w| w.values.shape() != window_shape) {
        return Err(Error::data(alloc::format!(
            "window from {:?} has shape {:?}, expected {:?}",
            w.origin,
            w.values.shape(),
            window_shape
        )));
    }
    if window_shape.0 == 0 {
        return Err(Error::data("windows have no sensors"));
    }
    if let Some(w) = data.iter().find(|w| w.label > LABEL_SWALLOW) {
        return Err(Error::data(alloc::format!("label {} is not binary", w.label)));
    }
    let positives = data.iter().filter(|w| w.label == LABEL_SWALLOW).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::data("training data must contain both classes"));
    }

    let inputs: Vec<Vec<f64>> = data
        .iter()
        .map(|w| model_input(&w.values, 0..window_shape.1, input_side))
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = data.iter().map(|w| w.label as usize).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
    let mut params = arch.init_params(&mut rng);
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(meta.epochs);
    let mut epoch_accuracy = Vec::with_capacity(meta.epochs);

    for _ in 0..meta.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(meta.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let (loss, logits) =
                    arch.accumulate_gradient(&params, &inputs[i], labels[i], &mut grad);
                let predicted = Classification::from_probabilities(softmax(&logits)).class;
                correct += usize::from(predicted as usize == labels[i]);
                loss_sum += loss;
            }
            let step = meta.learning_rate / batch.len() as f64;
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= step * g;
            }
        }
        epoch_losses.push(loss_sum / data.len() as f64);
        epoch_accuracy.push(correct as f64 / data.len() as f64);
    }

    Ok(ClassifierModel {
        version: MODEL_VERSION,
        arch,
        window_shape,
        params,
        training: *meta,
        epoch_losses,
        epoch_accuracy,
    })
}
