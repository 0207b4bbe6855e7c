/// Maximum lines per synthetic page at a given progress through the
/// curriculum phase: a linear ramp from 1 to `l_max`, rounded up.
pub fn curriculum_lines(progress: f64, l_max: usize) -> usize {
    let l_max = l_max.max(1);
    let p = if progress.is_nan() { 0.0 } else { progress.clamp(0.0, 1.0) };
    ((p * l_max as f64).ceil() as usize).clamp(1, l_max)
}

/// How the share of synthetic documents evolves over epochs.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SynthSchedule {
    /// Length of the curriculum phase, during which the share stays at
    /// `start` and synthetic pages are cropped.
    pub curriculum_epochs: f64,
    /// Epochs taken by the linear decay once the curriculum phase ends.
    pub decay_epochs: f64,
    pub start: f64,
    pub end: f64,
}

impl Default for SynthSchedule {
    fn default() -> Self {
        SynthSchedule {
            curriculum_epochs: 30.0,
            decay_epochs: 30.0,
            start: 0.9,
            end: 0.2,
        }
    }
}

/// Probability of drawing a synthetic document at `epoch` (fractional
/// epochs allowed).
pub fn synth_fraction(epoch: f64, schedule: &SynthSchedule) -> f64 {
    let t = epoch - schedule.curriculum_epochs;
    if t <= 0.0 {
        return schedule.start;
    }
    if schedule.decay_epochs <= 0.0 || t >= schedule.decay_epochs {
        return schedule.end;
    }
    let f = t / schedule.decay_epochs;
    schedule.start + (schedule.end - schedule.start) * f
}

/// Generator settings at one point of training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurriculumState {
    /// Current maximum number of lines per page.
    pub l: usize,
    pub l_max: usize,
    pub synth_fraction: f64,
    /// Synthetic pages are cropped below their lowest entity only during
    /// the curriculum phase.
    pub crop: bool,
}

impl CurriculumState {
    pub fn at(epoch: f64, l_max: usize, schedule: &SynthSchedule) -> Self {
        let progress = if schedule.curriculum_epochs > 0.0 {
            epoch / schedule.curriculum_epochs
        } else {
            1.0
        };
        CurriculumState {
            l: curriculum_lines(progress, l_max),
            l_max,
            synth_fraction: synth_fraction(epoch, schedule),
            crop: epoch < schedule.curriculum_epochs,
        }
    }
}
