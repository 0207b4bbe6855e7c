use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loer::{document_graph_totals, GraphTotals};
use super::map::{document_map, extract_subsequences, SubSequenceGroup, THRESHOLDS_PERCENT};
use super::text::{char_edits, word_edits, EditTotals};
use super::MetricError;
use crate::markup::{build_graph, post_process, strip_layout, ClassId, LayoutGrammar, TokenSequence};

/// One ground-truth/prediction pair to score. `probs` are per-token
/// probabilities of the prediction; missing probabilities count as one.
#[derive(Clone, Debug)]
pub struct EvalDocument {
    pub id: String,
    pub gt: TokenSequence,
    pub pred: TokenSequence,
    pub probs: Option<Vec<f64>>,
}

/// Per-document numerators, denominators and sub-sequence dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentMetrics {
    pub id: String,
    pub char_edits: usize,
    pub chars: usize,
    pub word_edits: usize,
    pub words: usize,
    pub ged: usize,
    pub graph_size: usize,
    pub post_edits: usize,
    pub layout_tokens: usize,
    pub map_cer: f64,
    pub map_weight: usize,
    pub class_ap: BTreeMap<ClassId, f64>,
    pub class_chars: BTreeMap<ClassId, usize>,
    pub subsequences: Vec<SubSequenceGroup>,
}

/// Corpus-level AP of one class, averaged over documents by ground-truth
/// characters of that class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassApRow {
    pub class: ClassId,
    pub gt_chars: usize,
    pub ap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cer: f64,
    pub wer: f64,
    pub loer: f64,
    /// Percentage.
    pub map_cer: f64,
    pub pper: f64,
    pub documents: Vec<DocumentMetrics>,
    pub classes: Vec<ClassApRow>,
}

fn ratio(num: usize, den: usize) -> Result<f64, MetricError> {
    EditTotals {
        edits: num,
        reference_len: den,
    }
    .rate()
}

fn score_document(doc: &EvalDocument, grammar: &LayoutGrammar) -> Result<DocumentMetrics, MetricError> {
    let repaired = post_process(&doc.pred, grammar);
    let raw_probs = match &doc.probs {
        Some(p) if p.len() != doc.pred.len() => {
            return Err(MetricError::LengthMismatch {
                tokens: doc.pred.len(),
                probs: p.len(),
            })
        }
        Some(p) => p.clone(),
        None => vec![1.0; doc.pred.len()],
    };
    let probs = repaired.realign(&raw_probs, 0.0);
    let pred = &repaired.corrected;

    let gt_text = strip_layout(&doc.gt);
    let pred_text = strip_layout(pred);
    let c = char_edits(&gt_text, &pred_text);
    let w = word_edits(&gt_text, &pred_text);
    let graphs = document_graph_totals(&build_graph(&doc.gt, grammar)?, &build_graph(pred, grammar)?, grammar)?;
    let map = document_map(&doc.gt, pred, &probs)?;
    let groups = extract_subsequences(pred, &probs)?;
    Ok(DocumentMetrics {
        id: doc.id.clone(),
        char_edits: c.edits,
        chars: c.reference_len,
        word_edits: w.edits,
        words: w.reference_len,
        ged: graphs.ged,
        graph_size: graphs.size,
        post_edits: repaired.edit_count(),
        layout_tokens: doc.gt.layout_token_count(),
        map_cer: map.map_cer,
        map_weight: map.weight,
        class_ap: map.classes.iter().map(|c| (c.class, c.ap)).collect(),
        class_chars: map.classes.iter().map(|c| (c.class, c.gt_chars)).collect(),
        subsequences: groups.into_values().collect(),
    })
}

/// Repairs every prediction, then scores the corpus. Documents are scored
/// in parallel.
pub fn evaluate(docs: &[EvalDocument], grammar: &LayoutGrammar) -> Result<MetricReport, MetricError> {
    let documents = docs
        .par_iter()
        .map(|d| score_document(d, grammar))
        .collect::<Result<Vec<_>, _>>()?;
    MetricReport::from_documents(documents)
}

impl MetricReport {
    /// Aggregates per-document records into corpus values.
    pub fn from_documents(documents: Vec<DocumentMetrics>) -> Result<Self, MetricError> {
        let sum = |f: fn(&DocumentMetrics) -> usize| documents.iter().map(f).sum::<usize>();
        let cer = ratio(sum(|d| d.char_edits), sum(|d| d.chars))?;
        let wer = ratio(sum(|d| d.word_edits), sum(|d| d.words))?;
        let loer = GraphTotals {
            ged: sum(|d| d.ged),
            size: sum(|d| d.graph_size),
        }
        .rate()?;
        let pper = ratio(sum(|d| d.post_edits), sum(|d| d.layout_tokens))?;
        let weight = sum(|d| d.map_weight);
        let map_cer = if weight == 0 {
            return Err(MetricError::EmptyGroundTruthCorpus);
        } else {
            documents.iter().map(|d| d.map_cer * d.map_weight as f64).sum::<f64>() / weight as f64
        };

        let mut per_class: BTreeMap<ClassId, (f64, usize)> = BTreeMap::new();
        for d in &documents {
            for (class, &ap) in &d.class_ap {
                let chars = d.class_chars.get(class).copied().unwrap_or(0);
                let e = per_class.entry(*class).or_insert((0.0, 0));
                e.0 += ap * chars as f64;
                e.1 += chars;
            }
        }
        let classes = per_class
            .into_iter()
            .filter(|(_, (_, n))| *n > 0)
            .map(|(class, (s, n))| ClassApRow {
                class,
                gt_chars: n,
                ap: s / n as f64,
            })
            .collect();
        Ok(MetricReport {
            cer,
            wer,
            loer,
            map_cer,
            pper,
            documents,
            classes,
        })
    }

    /// `key: value` lines: corpus metrics, per-class AP, then per-document
    /// sub-sequence confidences.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "documents: {}", self.documents.len());
        let _ = writeln!(out, "cer: {}", self.cer);
        let _ = writeln!(out, "wer: {}", self.wer);
        let _ = writeln!(out, "loer: {}", self.loer);
        let _ = writeln!(out, "map_cer: {}", self.map_cer);
        let _ = writeln!(out, "pper: {}", self.pper);
        let _ = writeln!(
            out,
            "thresholds: {}",
            THRESHOLDS_PERCENT.map(|t| t.to_string()).join(",")
        );
        for row in &self.classes {
            let _ = writeln!(out, "ap.{}: {} (chars {})", row.class, row.ap, row.gt_chars);
        }
        for d in &self.documents {
            for g in &d.subsequences {
                let scores: Vec<String> = g.entries.iter().map(|e| format!("{:.2}", e.confidence)).collect();
                let _ = writeln!(out, "doc.{}.{}: {}", d.id, g.class, scores.join(" "));
            }
        }
        out
    }

    /// One JSON object per document, one per line.
    pub fn to_records(&self) -> String {
        self.documents
            .iter()
            .map(|d| serde_json::to_string(d).expect("document metrics serialize") + "\n")
            .collect()
    }

    /// Rebuilds a report from [`Self::to_records`] output.
    pub fn from_records(text: &str) -> Result<Self, RecordError> {
        let documents = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<DocumentMetrics>, _>>()?;
        Ok(Self::from_documents(documents)?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("bad record: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Metric(#[from] MetricError),
}
