//! Classifier-based swallow detection.

pub mod cnn;
pub mod detect;
pub mod model;
pub mod windows;

pub use cnn::Architecture;
pub use detect::{
    detect_ml, events_from_inference, extract_events, sliding_window_inference, swallow_scores,
    window_starts, InferenceOutput, MlParams, RunEvent,
};
pub use model::{
    train_classifier, Classification, ClassifierModel, TrainingMeta, WindowClassifier,
    DEFAULT_INPUT_SIDE, BACKBONE_INPUT_SIDE,
};
pub use windows::{extract_training_windows, SwallowWindow, TrainingWindows, WindowOrigin, WINDOW_LEN};
