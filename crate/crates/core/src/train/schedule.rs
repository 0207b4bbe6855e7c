use serde::{Deserialize, Serialize};

/// `(1 - final) * exp(-t / total) + final`, evaluated as written.
pub fn curriculum_dropout(t: f64, total: f64, final_rate: f64) -> f64 {
    (1.0 - final_rate) * (-t / total).exp() + final_rate
}

/// How the curriculum value maps to the dropout rate actually applied.
///
/// Read literally, the schedule starts at a dropout rate of 1, which drops
/// every activation. `RetainProbability` reads it as the probability of
/// keeping a unit, with `1 - final` as the final retain probability, so the
/// rate rises from 0 to `final`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropoutInterpretation {
    DropoutRateAsWritten,
    #[default]
    RetainProbability,
}

impl DropoutInterpretation {
    /// Dropout rate after `t` updates.
    pub fn rate(self, t: f64, total: f64, final_rate: f64) -> f64 {
        match self {
            DropoutInterpretation::DropoutRateAsWritten => curriculum_dropout(t, total, final_rate),
            DropoutInterpretation::RetainProbability => 1.0 - curriculum_dropout(t, total, 1.0 - final_rate),
        }
    }
}
