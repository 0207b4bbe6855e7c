//! Encoder-decoder for whole-page recognition: tensors and reverse-mode
//! differentiation, the convolutional encoder, positional encodings, the
//! windowed causal transformer decoder, teacher forcing and greedy
//! decoding, checkpoints and attention export.

pub mod attention_map;
mod checkpoint;
mod config;
mod document;
mod network;
mod params;
mod posenc;
mod preprocess;
mod tape;
mod tensor;
mod vocab;

pub use checkpoint::{Checkpoint, CheckpointError, CheckpointHeader, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, NormPlacement};
pub use document::{
    inject_errors, sequence_loss, DecodeOptions, DecoderState, DocumentModel, EncoderOutput, StepOptions,
};
pub use network::{causal_window_mask, multi_head_attention};
pub(crate) use network::{Encoder, Linear};
pub use params::{glorot, normal, Adam, ParamId, ParamStore};
pub use posenc::{flat_index, flatten_with_pe, pe_1d, pe_2d, unflatten};
pub use preprocess::{preprocess_image, rescale_to_dpi, Normalization, TARGET_DPI};
pub use tape::{matmul, softmax_rows, ConvGeom, Gradients, Tape, Var};
pub use tensor::TensorF;
pub use vocab::Vocab;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("attention row {row} has every position masked")]
    AllMasked { row: usize },
    #[error("image {height}x{width} is smaller than the encoder stride {min_height}x{min_width}")]
    InputTooSmall {
        height: usize,
        width: usize,
        min_height: usize,
        min_width: usize,
    },
    #[error("empty image")]
    EmptyImage,
    #[error("unknown token id {0}")]
    UnknownTokenId(usize),
    #[error("token {0} is not in the vocabulary")]
    UnknownToken(String),
    #[error("prefix of {len} tokens exceeds the maximum of {max}")]
    PrefixTooLong { len: usize, max: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("missing parameter {0}")]
    MissingParameter(String),
}
