use super::ged::ged;
use super::MetricError;
use crate::markup::{build_graph, LayoutGrammar, LayoutGraph, TokenSequence};

/// Summed graph edit distance and ground-truth graph size of one document.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GraphTotals {
    pub ged: usize,
    pub size: usize,
}

impl std::ops::Add for GraphTotals {
    type Output = GraphTotals;
    fn add(self, rhs: Self) -> Self {
        GraphTotals {
            ged: self.ged + rhs.ged,
            size: self.size + rhs.size,
        }
    }
}

impl std::iter::Sum for GraphTotals {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(GraphTotals::default(), |a, b| a + b)
    }
}

impl GraphTotals {
    pub fn rate(&self) -> Result<f64, MetricError> {
        if self.size == 0 {
            return Err(MetricError::EmptyGroundTruthCorpus);
        }
        Ok(self.ged as f64 / self.size as f64)
    }
}

/// Page-by-page edit distance of one document. Pages are paired in order;
/// pages without a counterpart are compared with the null graph.
pub fn document_graph_totals(
    gt: &LayoutGraph,
    pred: &LayoutGraph,
    grammar: &LayoutGrammar,
) -> Result<GraphTotals, MetricError> {
    let gt_pages = gt.pages(grammar);
    let pred_pages = pred.pages(grammar);
    let null = LayoutGraph::null();
    let n = gt_pages.len().max(pred_pages.len());
    let mut totals = GraphTotals::default();
    for i in 0..n {
        let g = gt_pages.get(i).unwrap_or(&null);
        let p = pred_pages.get(i).unwrap_or(&null);
        totals.ged += ged(g, p)?;
        totals.size += g.size();
    }
    Ok(totals)
}

/// Layout ordering error rate over graph pairs `(ground truth, prediction)`.
pub fn loer(pairs: &[(LayoutGraph, LayoutGraph)], grammar: &LayoutGrammar) -> Result<f64, MetricError> {
    pairs
        .iter()
        .map(|(g, p)| document_graph_totals(g, p, grammar))
        .sum::<Result<GraphTotals, _>>()?
        .rate()
}

/// Same as [`loer`] from post-processed token sequences.
pub fn loer_sequences(
    pairs: &[(TokenSequence, TokenSequence)],
    grammar: &LayoutGrammar,
) -> Result<f64, MetricError> {
    let graphs = pairs
        .iter()
        .map(|(g, p)| Ok((build_graph(g, grammar)?, build_graph(p, grammar)?)))
        .collect::<Result<Vec<_>, MetricError>>()?;
    loer(&graphs, grammar)
}
