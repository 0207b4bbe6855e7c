use serde::{Deserialize, Serialize};

use super::{AugmentConfig, DropoutInterpretation, TrainError};
use crate::model::Normalization;
use crate::synth::SynthSchedule;

fn positive(v: f64) -> bool {
    v > 0.0
}

fn check_rate(name: &str, v: f64) -> Result<(), TrainError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(TrainError::InvalidConfig(format!("{name} = {v} is outside [0, 1]")))
    }
}

fn check_augment(a: &AugmentConfig) -> Result<(), TrainError> {
    check_rate("augment.probability", a.probability)?;
    check_rate("augment.transform_probability", a.transform_probability)
}

/// Page-level training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Initial Adam learning rate.
    pub lr: f64,
    /// Weight updates to run.
    pub steps: usize,
    /// Estimated total number of updates, the time constant of the
    /// dropout curriculum.
    pub total_updates: f64,
    /// Dropout rate reached at the end of the curriculum.
    pub final_dropout: f64,
    pub dropout_interpretation: DropoutInterpretation,
    /// Share of teacher-forcing inputs replaced by random tokens.
    pub error_rate: f64,
    pub augment: AugmentConfig,
    pub schedule: SynthSchedule,
    /// Largest number of lines on a synthetic page; 0 takes the style
    /// sheet's value.
    pub l_max: usize,
    /// Updates per epoch when there is no real data to count.
    pub epoch_size: usize,
    /// Save every this many updates; 0 saves only at the end.
    pub checkpoint_every: usize,
    pub normalization: Normalization,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            steps: 1000,
            total_updates: 5e4,
            final_dropout: 0.1,
            dropout_interpretation: DropoutInterpretation::default(),
            error_rate: 0.2,
            augment: AugmentConfig::default(),
            schedule: SynthSchedule::default(),
            l_max: 0,
            epoch_size: 1000,
            checkpoint_every: 0,
            normalization: Normalization::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        check_rate("final_dropout", self.final_dropout)?;
        check_rate("error_rate", self.error_rate)?;
        check_rate("schedule.start", self.schedule.start)?;
        check_rate("schedule.end", self.schedule.end)?;
        check_augment(&self.augment)?;
        if !positive(self.total_updates) {
            return Err(TrainError::InvalidConfig("total_updates must be positive".into()));
        }
        if !positive(self.lr) || self.epoch_size == 0 {
            return Err(TrainError::InvalidConfig("lr and epoch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Line pre-training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub total_updates: f64,
    pub final_dropout: f64,
    pub dropout_interpretation: DropoutInterpretation,
    pub augment: AugmentConfig,
    /// Glyph height range in pixels.
    pub font_size: (usize, usize),
    /// White border around each rendered line.
    pub pad: usize,
    pub normalization: Normalization,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            lr: 1e-4,
            batch_size: 16,
            steps: 1000,
            total_updates: 5e4,
            final_dropout: 0.1,
            dropout_interpretation: DropoutInterpretation::default(),
            augment: AugmentConfig::default(),
            font_size: (16, 24),
            pad: 4,
            normalization: Normalization::default(),
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        check_rate("final_dropout", self.final_dropout)?;
        check_augment(&self.augment)?;
        if !positive(self.total_updates) || !positive(self.lr) {
            return Err(TrainError::InvalidConfig("lr and total_updates must be positive".into()));
        }
        if self.batch_size == 0 || self.font_size.0 == 0 || self.font_size.0 > self.font_size.1 {
            return Err(TrainError::InvalidConfig("batch_size and font_size must be positive".into()));
        }
        Ok(())
    }
}
