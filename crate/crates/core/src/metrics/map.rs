use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::text::levenshtein;
use super::MetricError;
use crate::markup::{ClassId, Token, TokenSequence};

/// CER thresholds, in percent, averaged by mAP_CER.
pub const THRESHOLDS_PERCENT: [u32; 10] = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubSequence {
    pub text: String,
    pub confidence: f64,
}

/// All entities of one class, highest confidence first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubSequenceGroup {
    pub class: ClassId,
    pub entries: Vec<SubSequence>,
}

impl SubSequenceGroup {
    pub fn char_count(&self) -> usize {
        self.entries.iter().map(|e| e.text.chars().count()).sum()
    }
}

/// Groups the text of every begin/end pair by class. Nested entities each
/// get an entry holding all the characters they enclose; the confidence is
/// the mean of the begin and end token probabilities. Unpaired tokens are
/// skipped.
pub fn extract_subsequences(
    seq: &TokenSequence,
    probs: &[f64],
) -> Result<BTreeMap<ClassId, SubSequenceGroup>, MetricError> {
    if seq.len() != probs.len() {
        return Err(MetricError::LengthMismatch {
            tokens: seq.len(),
            probs: probs.len(),
        });
    }
    // Open entities: (class, begin probability, text so far).
    let mut open: Vec<(ClassId, f64, String)> = Vec::new();
    // Closed entries tagged with their begin order so output is stable.
    let mut closed: Vec<(usize, ClassId, SubSequence)> = Vec::new();
    let mut begin_order: Vec<usize> = Vec::new();
    let mut begins = 0;
    for (tok, &p) in seq.iter().zip(probs) {
        match *tok {
            Token::Char(c) => open.iter_mut().for_each(|(_, _, t)| t.push(c)),
            Token::Begin(c) => {
                open.push((c, p, String::new()));
                begin_order.push(begins);
                begins += 1;
            }
            Token::End(c) => {
                if let Some(at) = open.iter().rposition(|(o, _, _)| *o == c) {
                    // Close anything left open above the match as well.
                    while open.len() > at {
                        let (class, pb, text) = open.pop().unwrap();
                        let order = begin_order.pop().unwrap();
                        if open.len() == at {
                            closed.push((order, class, SubSequence { text, confidence: (pb + p) / 2.0 }));
                        }
                    }
                }
            }
            Token::Sot | Token::Eot => {}
        }
    }
    closed.sort_by_key(|(order, _, _)| *order);
    let mut groups: BTreeMap<ClassId, SubSequenceGroup> = BTreeMap::new();
    for (_, class, entry) in closed {
        groups
            .entry(class)
            .or_insert_with(|| SubSequenceGroup { class, entries: Vec::new() })
            .entries
            .push(entry);
    }
    for g in groups.values_mut() {
        g.entries.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    }
    Ok(groups)
}

/// Precision/recall after each prediction, in confidence order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// `(recall, precision)` pairs.
    pub points: Vec<(f64, f64)>,
    /// Highest precision at any recall at or above each point's recall.
    pub interpolated: Vec<f64>,
}

impl PrCurve {
    fn from_hits(hits: &[bool], n_gt: usize) -> Self {
        let mut tp = 0usize;
        let points: Vec<(f64, f64)> = hits
            .iter()
            .enumerate()
            .map(|(n, &hit)| {
                tp += usize::from(hit);
                let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
                (recall, tp as f64 / (n + 1) as f64)
            })
            .collect();
        let mut interpolated = vec![0.0; points.len()];
        let mut best = 0.0f64;
        for i in (0..points.len()).rev() {
            best = best.max(points[i].1);
            interpolated[i] = best;
        }
        PrCurve { points, interpolated }
    }

    /// Area under the interpolated curve as a sum of rectangles.
    pub fn average_precision(&self) -> f64 {
        let mut prev = 0.0;
        let mut area = 0.0;
        for (&(r, _), &p) in self.points.iter().zip(&self.interpolated) {
            area += (r - prev) * p;
            prev = r;
        }
        area
    }
}

fn char_error(pred: &[char], gt: &[char]) -> f64 {
    let d = levenshtein(pred, gt);
    if gt.is_empty() {
        if d == 0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        d as f64 / gt.len() as f64
    }
}

/// Greedy matching in confidence order. A prediction is a true positive
/// when its CER against some unused ground-truth entry is strictly below
/// `threshold`; it takes the unused entry of lowest CER, earliest on ties.
pub fn pr_curve_at(gt: &SubSequenceGroup, pred: &SubSequenceGroup, threshold: f64) -> PrCurve {
    let gt_chars: Vec<Vec<char>> = gt.entries.iter().map(|e| e.text.chars().collect()).collect();
    let mut used = vec![false; gt_chars.len()];
    let mut hits = Vec::with_capacity(pred.entries.len());
    for p in &pred.entries {
        let p: Vec<char> = p.text.chars().collect();
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gt_chars.iter().enumerate() {
            if used[j] {
                continue;
            }
            let e = char_error(&p, g);
            if best.is_none_or(|(_, b)| e < b) {
                best = Some((j, e));
            }
        }
        match best {
            Some((j, e)) if e < threshold => {
                used[j] = true;
                hits.push(true);
            }
            _ => hits.push(false),
        }
    }
    PrCurve::from_hits(&hits, gt_chars.len())
}

/// Average precision of one class at one CER threshold.
pub fn ap_cer_at(gt: &SubSequenceGroup, pred: &SubSequenceGroup, threshold: f64) -> f64 {
    match (gt.entries.is_empty(), pred.entries.is_empty()) {
        (true, true) => 1.0,
        (true, false) => 0.0,
        _ => pr_curve_at(gt, pred, threshold).average_precision(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class: ClassId,
    pub gt_chars: usize,
    /// AP at each threshold of [`THRESHOLDS_PERCENT`].
    pub per_threshold: Vec<f64>,
    /// Mean over thresholds, in [0, 1].
    pub ap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentMap {
    pub classes: Vec<ClassAp>,
    /// Percentage.
    pub map_cer: f64,
    /// Ground-truth characters, the document's weight in the corpus mean.
    /// Zero when the ground truth has no layout entity.
    pub weight: usize,
}

/// Per-class AP and the document mAP_CER. `gt` is scored with probability
/// one on every token.
pub fn document_map(gt: &TokenSequence, pred: &TokenSequence, probs: &[f64]) -> Result<DocumentMap, MetricError> {
    let gt_groups = extract_subsequences(gt, &vec![1.0; gt.len()])?;
    let pred_groups = extract_subsequences(pred, probs)?;
    let mut classes = Vec::new();
    let mut weighted = 0.0;
    let mut total = 0usize;
    let mut keys: Vec<ClassId> = gt_groups.keys().chain(pred_groups.keys()).copied().collect();
    keys.sort();
    keys.dedup();
    for class in keys {
        let empty = SubSequenceGroup { class, entries: Vec::new() };
        let g = gt_groups.get(&class).unwrap_or(&empty);
        let p = pred_groups.get(&class).unwrap_or(&empty);
        let per_threshold: Vec<f64> = THRESHOLDS_PERCENT
            .iter()
            .map(|&t| ap_cer_at(g, p, t as f64 / 100.0))
            .collect();
        let ap = per_threshold.iter().sum::<f64>() / per_threshold.len() as f64;
        let gt_chars = g.char_count();
        weighted += ap * gt_chars as f64;
        total += gt_chars;
        classes.push(ClassAp {
            class,
            gt_chars,
            per_threshold,
            ap,
        });
    }
    let map = if total > 0 {
        100.0 * weighted / total as f64
    } else if pred_groups.is_empty() {
        100.0
    } else {
        0.0
    };
    let weight = if gt_groups.is_empty() {
        0
    } else {
        gt.iter().filter(|t| t.is_char()).count()
    };
    Ok(DocumentMap {
        classes,
        map_cer: map,
        weight,
    })
}

/// Document mAP_CER, as a percentage.
pub fn map_cer(gt: &TokenSequence, pred: &TokenSequence, probs: &[f64]) -> Result<f64, MetricError> {
    Ok(document_map(gt, pred, probs)?.map_cer)
}

/// Corpus mAP_CER: document values weighted by their character counts.
pub fn corpus_map_cer(docs: &[DocumentMap]) -> Result<f64, MetricError> {
    let total: usize = docs.iter().map(|d| d.weight).sum();
    if total == 0 {
        return Err(MetricError::EmptyGroundTruthCorpus);
    }
    Ok(docs.iter().map(|d| d.map_cer * d.weight as f64).sum::<f64>() / total as f64)
}
