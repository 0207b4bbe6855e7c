//! Recognition metrics: CER, WER, LOER, mAP_CER and PPER.
//!
//! Corpus-level values are ratios of sums; per-document numerators and
//! denominators are kept in the report so they can be re-aggregated.

mod ged;
mod loer;
mod map;
mod pper;
mod report;
mod text;

pub use ged::{ged, ged_with_budget, DEFAULT_NODE_BUDGET};
pub use loer::{document_graph_totals, loer, loer_sequences, GraphTotals};
pub use map::{
    ap_cer_at, corpus_map_cer, document_map, extract_subsequences, map_cer, pr_curve_at, ClassAp, DocumentMap,
    PrCurve, SubSequence, SubSequenceGroup, THRESHOLDS_PERCENT,
};
pub use pper::pper;
pub use report::{evaluate, ClassApRow, DocumentMetrics, EvalDocument, MetricReport, RecordError};
pub use text::{cer, char_count, char_edits, levenshtein, wer, word_edits, words, EditTotals};

use crate::markup::MarkupError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("ground-truth corpus is empty, the metric denominator is zero")]
    EmptyGroundTruthCorpus,
    #[error("graph has {nodes} nodes, above the exact-search budget of {budget}")]
    GraphTooLarge { nodes: usize, budget: usize },
    #[error("{tokens} tokens but {probs} probabilities")]
    LengthMismatch { tokens: usize, probs: usize },
    #[error(transparent)]
    Markup(#[from] MarkupError),
}
