use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{augment, page_input, TrainConfig, TrainError};
use crate::markup::{LayoutGrammar, TokenSequence};
use crate::model::{Adam, Checkpoint, DocumentModel, Normalization, StepOptions};
use crate::raster::Raster;
use crate::synth::{CurriculumState, SynthGenerator};

/// A real page at the working resolution with its transcript.
#[derive(Clone, Debug, PartialEq)]
pub struct DocumentSample {
    pub id: String,
    pub image: Raster,
    pub gt: TokenSequence,
}

/// One page-level update, as written to the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: f64,
    /// Encoder dropout rate used for this update.
    pub tau: f64,
    pub synth_fraction: f64,
    /// Curriculum bound on lines per synthetic page.
    pub l: usize,
    pub synthetic: bool,
}

pub enum TrainEvent<'a> {
    Step(&'a TrainRecord, &'a DocumentModel),
    Checkpoint(&'a Checkpoint),
}

/// Normalisation stored by [`train_documents`] in a checkpoint's metadata.
pub fn checkpoint_normalization(ck: &Checkpoint) -> Option<Normalization> {
    serde_json::from_value(ck.header.meta.get("normalization")?.clone()).ok()
}

fn checkpoint(
    model: &DocumentModel,
    grammar: &LayoutGrammar,
    cfg: &TrainConfig,
    step: usize,
    history: &[TrainRecord],
) -> Checkpoint {
    model.to_checkpoint(
        grammar,
        serde_json::json!({
            "step": step,
            "train_config": cfg,
            "normalization": cfg.normalization,
            "history": history,
        }),
    )
}

/// Teacher-forced training, one page per update. Each update draws a
/// synthetic page with the curriculum's probability (or whichever source
/// exists), augments it, and corrupts the decoder input at
/// `cfg.error_rate`. Returns the final checkpoint, whose metadata holds the
/// configuration and the loss history.
pub fn train_documents(
    cfg: &TrainConfig,
    real: &[DocumentSample],
    mut synth: Option<&mut SynthGenerator>,
    model: &mut DocumentModel,
    grammar: &LayoutGrammar,
    mut on_event: impl FnMut(TrainEvent<'_>) -> ControlFlow<()>,
) -> Result<Checkpoint, TrainError> {
    cfg.validate()?;
    if real.is_empty() && synth.is_none() {
        return Err(TrainError::NoData);
    }
    let l_max = match (&synth, cfg.l_max) {
        (Some(g), 0) => g.sheet().l_max,
        (_, 0) => 1,
        (_, l) => l,
    };
    let epoch_len = if real.is_empty() { cfg.epoch_size } else { real.len() } as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.lr);
    let mut history = Vec::with_capacity(cfg.steps);
    let stride = model.config().stride;
    let decoder_dropout = model.config().dropout;
    model.params.zero_grad();
    for step in 0..cfg.steps {
        let state = CurriculumState::at(step as f64 / epoch_len, l_max, &cfg.schedule);
        let use_synth = match &synth {
            None => false,
            Some(_) if real.is_empty() => true,
            Some(_) => rng.gen_bool(state.synth_fraction),
        };
        let (image, gt) = match synth.as_deref_mut() {
            Some(g) if use_synth => {
                let d = g.next(state.l, state.crop)?;
                (d.image, d.ground_truth)
            }
            _ => {
                let s = &real[rng.gen_range(0..real.len())];
                (s.image.clone(), s.gt.clone())
            }
        };
        let image = augment(&image, &mut rng, &cfg.augment);
        let input = page_input(&image, &cfg.normalization, stride)?;
        let tau = cfg
            .dropout_interpretation
            .rate(step as f64, cfg.total_updates, cfg.final_dropout);
        let opts = StepOptions {
            encoder_dropout: tau,
            decoder_dropout,
            error_rate: cfg.error_rate,
        };
        let loss = model.accumulate_gradients(&input, &gt, &opts, &mut rng)?;
        adam.step(&mut model.params);
        history.push(TrainRecord {
            step: step + 1,
            loss,
            tau,
            synth_fraction: state.synth_fraction,
            l: state.l,
            synthetic: use_synth,
        });
        if on_event(TrainEvent::Step(history.last().expect("just pushed"), model)).is_break() {
            break;
        }
        if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps {
            let ck = checkpoint(model, grammar, cfg, step + 1, &history);
            if on_event(TrainEvent::Checkpoint(&ck)).is_break() {
                break;
            }
        }
    }
    let ck = checkpoint(model, grammar, cfg, history.len(), &history);
    // The caller learns about the final checkpoint from the return value.
    Ok(ck)
}
