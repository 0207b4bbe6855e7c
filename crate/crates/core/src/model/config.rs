use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormPlacement {
    /// Normalise after each residual sum.
    Post,
    /// Normalise each sub-layer input, with a final normalisation.
    Pre,
}

/// Hyper-parameters of the encoder-decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Dropout on decoder sub-layer outputs.
    pub dropout: f64,
    /// Self-attention looks at most this many tokens back, itself included.
    pub window: usize,
    pub l_max: usize,
    /// |D|: characters, layout tokens and Eot.
    pub vocab_size: usize,
    /// Total encoder downsampling (vertical, horizontal); powers of two.
    pub stride: (usize, usize),
    /// Output channels per encoder block; the last one must be `d_model`.
    pub encoder_channels: Vec<usize>,
    /// Convolutions per encoder block, the first one strided.
    pub convs_per_block: usize,
    pub in_channels: usize,
    pub norm: NormPlacement,
}

fn log2(x: usize) -> Option<usize> {
    (x.is_power_of_two()).then(|| x.trailing_zeros() as usize)
}

impl ModelConfig {
    /// Sizes used for the full-scale model.
    pub fn paper(vocab_size: usize) -> Self {
        ModelConfig {
            d_model: 256,
            layers: 8,
            heads: 4,
            ff_dim: 256,
            dropout: 0.1,
            window: 100,
            l_max: 3000,
            vocab_size,
            stride: (32, 8),
            encoder_channels: vec![32, 64, 128, 256, 256],
            convs_per_block: 3,
            in_channels: 1,
            norm: NormPlacement::Post,
        }
    }

    /// Small model trainable on one CPU core.
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig {
            d_model: 64,
            layers: 2,
            heads: 2,
            ff_dim: 64,
            dropout: 0.1,
            window: 100,
            l_max: 600,
            vocab_size,
            stride: (32, 8),
            encoder_channels: vec![16, 32, 48, 64, 64],
            convs_per_block: 2,
            in_channels: 1,
            norm: NormPlacement::Post,
        }
    }

    /// Smallest meaningful model, for gradient checks.
    pub fn tiny(vocab_size: usize) -> Self {
        ModelConfig {
            d_model: 8,
            layers: 1,
            heads: 1,
            ff_dim: 8,
            dropout: 0.0,
            window: 100,
            l_max: 64,
            vocab_size,
            stride: (2, 4),
            encoder_channels: vec![4, 8],
            convs_per_block: 1,
            in_channels: 1,
            norm: NormPlacement::Post,
        }
    }

    pub fn blocks(&self) -> usize {
        log2(self.stride.0).unwrap_or(0).max(log2(self.stride.1).unwrap_or(0)).max(1)
    }

    /// Stride of encoder block `i`.
    pub fn block_stride(&self, i: usize) -> (usize, usize) {
        let ly = log2(self.stride.0).unwrap_or(0);
        let lx = log2(self.stride.1).unwrap_or(0);
        (if i < ly { 2 } else { 1 }, if i < lx { 2 } else { 1 })
    }

    /// Feature map size for an input of `h` by `w` pixels.
    pub fn feature_shape(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride.0), w.div_ceil(self.stride.1))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.d_model == 0 || !self.d_model.is_multiple_of(4) {
            return bad("d_model must be a positive multiple of 4");
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return bad("d_model must be divisible by the head count");
        }
        if self.window == 0 || self.l_max == 0 {
            return bad("window and l_max must be at least 1");
        }
        if self.vocab_size < 2 || self.ff_dim == 0 || self.in_channels == 0 || self.convs_per_block == 0 {
            return bad("vocab_size, ff_dim, in_channels and convs_per_block must be positive");
        }
        if log2(self.stride.0).is_none() || log2(self.stride.1).is_none() {
            return bad("encoder strides must be powers of two");
        }
        if self.encoder_channels.len() != self.blocks() {
            return bad("one channel count per encoder block");
        }
        if self.encoder_channels.last() != Some(&self.d_model) {
            return bad("the last encoder block must output d_model channels");
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1]");
        }
        Ok(())
    }
}
