use super::MetricError;
use crate::markup::{PostProcessReport, TokenSequence};

/// Post-processing edition rate: repair edits over ground-truth layout
/// tokens, summed across the corpus.
pub fn pper(pairs: &[(TokenSequence, PostProcessReport)]) -> Result<f64, MetricError> {
    let edits: usize = pairs.iter().map(|(_, r)| r.edit_count()).sum();
    let layout: usize = pairs.iter().map(|(g, _)| g.layout_token_count()).sum();
    if layout == 0 {
        return Err(MetricError::EmptyGroundTruthCorpus);
    }
    Ok(edits as f64 / layout as f64)
}
