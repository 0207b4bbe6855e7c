//! Training: CTC line pre-training, weight transfer, curriculum dropout,
//! augmentation and teacher-forced page training.

mod augment;
mod config;
mod ctc;
mod documents;
mod input;
mod line_model;
mod pretrain;
mod schedule;

pub use augment::{augment, dilate, erode, gaussian_blur, gaussian_noise, homography, AugmentConfig, Transform};
pub use config::{PretrainConfig, TrainConfig};
pub use ctc::{ctc_loss, ctc_min_frames, ctc_on_tape};
pub use documents::{checkpoint_normalization, train_documents, DocumentSample, TrainEvent, TrainRecord};
pub use input::{line_input, pad_to, page_input};
pub use line_model::{transfer_weights, LineOcrModel};
pub use pretrain::{pretrain_lines, render_training_line, PretrainRecord};
pub use schedule::{curriculum_dropout, DropoutInterpretation};

use thiserror::Error;

use crate::model::ModelError;
use crate::synth::SynthError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("target needs {target} frames but the line has {frames}")]
    TargetTooLong { target: usize, frames: usize },
    #[error("label {0} is the blank or out of range")]
    InvalidLabel(usize),
    #[error("character {0:?} is not in the line alphabet")]
    UnknownChar(char),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("no training data")]
    NoData,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}
