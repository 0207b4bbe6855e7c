use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{augment, ctc_min_frames, line_input, LineOcrModel, PretrainConfig, TrainError};
use crate::model::Adam;
use crate::synth::{synth_line_image, GlyphSet, Span};

/// One pre-training update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainRecord {
    pub step: usize,
    /// Mean CTC loss over the batch.
    pub loss: f64,
    pub tau: f64,
}

/// Rendered, augmented and normalised line image for `text`.
pub fn render_training_line(
    text: &str,
    model: &LineOcrModel,
    fonts: &[GlyphSet],
    cfg: &PretrainConfig,
    rng: &mut impl Rng,
) -> Result<crate::model::TensorF, TrainError> {
    let img = synth_line_image(text, fonts, Span::new(cfg.font_size.0, cfg.font_size.1), cfg.pad, rng)?;
    let img = augment(&img, rng, &cfg.augment);
    let frames = ctc_min_frames(&model.labels(text)?);
    Ok(line_input(&img, &cfg.normalization, model.config().stride, frames)?)
}

/// CTC training of `model` on synthetic renderings of `texts`, in batches
/// of `cfg.batch_size` lines drawn at random. `on_step` sees every update
/// and may stop training early.
pub fn pretrain_lines(
    cfg: &PretrainConfig,
    model: &mut LineOcrModel,
    texts: &[String],
    fonts: &[GlyphSet],
    mut on_step: impl FnMut(&PretrainRecord, &LineOcrModel) -> ControlFlow<()>,
) -> Result<Vec<PretrainRecord>, TrainError> {
    cfg.validate()?;
    let texts: Vec<&String> = texts.iter().filter(|t| !t.is_empty()).collect();
    if texts.is_empty() {
        return Err(TrainError::NoData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.lr);
    let mut history = Vec::with_capacity(cfg.steps);
    model.params.zero_grad();
    for step in 0..cfg.steps {
        let tau = cfg
            .dropout_interpretation
            .rate(step as f64, cfg.total_updates, cfg.final_dropout);
        let mut total = 0.0;
        for _ in 0..cfg.batch_size {
            let text = texts[rng.gen_range(0..texts.len())];
            let input = render_training_line(text, model, fonts, cfg, &mut rng)?;
            total += model.accumulate_gradients(&input, text, tau, &mut rng)?;
        }
        model.params.scale_grads(1.0 / cfg.batch_size as f64);
        adam.step(&mut model.params);
        let rec = PretrainRecord {
            step: step + 1,
            loss: total / cfg.batch_size as f64,
            tau,
        };
        let stop = on_step(&rec, model).is_break();
        history.push(rec);
        if stop {
            break;
        }
    }
    Ok(history)
}
