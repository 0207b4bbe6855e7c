//! Exact graph edit distance between layout graphs.
//!
//! Depth-first branch and bound over node assignments. Nodes of the first
//! graph are assigned, in index order, to an unused node of the second graph
//! or deleted; whatever is left of the second graph is inserted. Edge costs
//! follow from the assignment. Every node or edge insertion, deletion or
//! relabelling costs one.

use std::collections::HashMap;

use super::MetricError;
use crate::markup::{EdgeKind, LayoutGraph, NodeLabel};

/// Default upper bound on nodes per graph for exact search.
pub const DEFAULT_NODE_BUDGET: usize = 40;

pub fn ged(g1: &LayoutGraph, g2: &LayoutGraph) -> Result<usize, MetricError> {
    ged_with_budget(g1, g2, DEFAULT_NODE_BUDGET)
}

pub fn ged_with_budget(g1: &LayoutGraph, g2: &LayoutGraph, budget: usize) -> Result<usize, MetricError> {
    let largest = g1.node_count().max(g2.node_count());
    if largest > budget {
        return Err(MetricError::GraphTooLarge { nodes: largest, budget });
    }
    Ok(Search::new(g1, g2).run())
}

const DELETED: usize = usize::MAX;

struct Search<'a> {
    labels1: &'a [NodeLabel],
    labels2: &'a [NodeLabel],
    adj1: Vec<Vec<Option<EdgeKind>>>,
    adj2: Vec<Vec<Option<EdgeKind>>>,
    n1: usize,
    n2: usize,
    // Label ids for the node lower bound.
    lab1: Vec<usize>,
    lab2: Vec<usize>,
    n_labels: usize,
    mapping: Vec<usize>,
    used: Vec<bool>,
    best: usize,
}

fn adjacency(g: &LayoutGraph) -> Vec<Vec<Option<EdgeKind>>> {
    let n = g.node_count();
    let mut adj = vec![vec![None; n]; n];
    for (a, b, k) in g.edges() {
        adj[a][b] = Some(k);
    }
    adj
}

fn edge_cost(a: Option<EdgeKind>, b: Option<EdgeKind>) -> usize {
    match (a, b) {
        (None, None) => 0,
        (Some(x), Some(y)) => usize::from(x != y),
        _ => 1,
    }
}

impl<'a> Search<'a> {
    fn new(g1: &'a LayoutGraph, g2: &'a LayoutGraph) -> Self {
        let mut ids: HashMap<NodeLabel, usize> = HashMap::new();
        let mut id_of = |l: &NodeLabel| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        };
        let lab1: Vec<usize> = g1.nodes.iter().map(&mut id_of).collect();
        let lab2: Vec<usize> = g2.nodes.iter().map(&mut id_of).collect();
        let n_labels = ids.len();
        Search {
            labels1: &g1.nodes,
            labels2: &g2.nodes,
            adj1: adjacency(g1),
            adj2: adjacency(g2),
            n1: g1.node_count(),
            n2: g2.node_count(),
            lab1,
            lab2,
            n_labels,
            mapping: vec![DELETED; g1.node_count()],
            used: vec![false; g2.node_count()],
            best: usize::MAX,
        }
    }

    fn run(mut self) -> usize {
        self.best = self.initial_upper_bound();
        self.descend(0, 0);
        self.best
    }

    /// Cost of assigning node `i` to `target`, counting edges to the
    /// already assigned nodes `0..i`.
    fn step_cost(&self, i: usize, target: usize) -> usize {
        let mut cost = if target == DELETED {
            1
        } else {
            usize::from(self.labels1[i] != self.labels2[target])
        };
        for k in 0..i {
            let mk = self.mapping[k];
            if target == DELETED || mk == DELETED {
                cost += usize::from(self.adj1[i][k].is_some()) + usize::from(self.adj1[k][i].is_some());
            } else {
                cost += edge_cost(self.adj1[i][k], self.adj2[target][mk]);
                cost += edge_cost(self.adj1[k][i], self.adj2[mk][target]);
            }
        }
        cost
    }

    /// Insertion cost of the unused part of the second graph once all
    /// nodes of the first graph are assigned.
    fn completion_cost(&self) -> usize {
        let mut cost = self.used.iter().filter(|u| !**u).count();
        for a in 0..self.n2 {
            for b in 0..self.n2 {
                if self.adj2[a][b].is_some() && (!self.used[a] || !self.used[b]) {
                    cost += 1;
                }
            }
        }
        cost
    }

    /// Admissible estimate for assigning nodes `i..n1`.
    fn lower_bound(&self, i: usize) -> usize {
        let mut count1 = vec![0usize; self.n_labels];
        let mut count2 = vec![0usize; self.n_labels];
        for &l in &self.lab1[i..] {
            count1[l] += 1;
        }
        let mut rest2 = 0;
        for (j, &l) in self.lab2.iter().enumerate() {
            if !self.used[j] {
                count2[l] += 1;
                rest2 += 1;
            }
        }
        let rest1 = self.n1 - i;
        let common: usize = count1.iter().zip(&count2).map(|(a, b)| a.min(b)).sum();
        let nodes = rest1.max(rest2) - common;

        // Edges not yet paid for on each side, split by kind.
        let mut e1 = [0usize; 2];
        for a in 0..self.n1 {
            for b in 0..self.n1 {
                if let Some(k) = self.adj1[a][b] {
                    if a >= i || b >= i {
                        e1[k as usize] += 1;
                    }
                }
            }
        }
        let mut e2 = [0usize; 2];
        for a in 0..self.n2 {
            for b in 0..self.n2 {
                if let Some(k) = self.adj2[a][b] {
                    if !self.used[a] || !self.used[b] {
                        e2[k as usize] += 1;
                    }
                }
            }
        }
        let total1 = e1[0] + e1[1];
        let total2 = e2[0] + e2[1];
        let same_kind = e1[0].min(e2[0]) + e1[1].min(e2[1]);
        nodes + total1.max(total2) - same_kind
    }

    /// Greedy in-order assignment to same-label nodes.
    fn initial_upper_bound(&mut self) -> usize {
        let mut cost = 0;
        for i in 0..self.n1 {
            let target = (0..self.n2)
                .find(|&j| !self.used[j] && self.labels1[i] == self.labels2[j])
                .unwrap_or(DELETED);
            cost += self.step_cost(i, target);
            self.mapping[i] = target;
            if target != DELETED {
                self.used[target] = true;
            }
        }
        cost += self.completion_cost();
        self.mapping.iter_mut().for_each(|m| *m = DELETED);
        self.used.iter_mut().for_each(|u| *u = false);
        cost
    }

    fn candidates(&self, i: usize) -> Vec<usize> {
        let mut same: Vec<usize> = Vec::new();
        let mut other: Vec<usize> = Vec::new();
        for j in 0..self.n2 {
            if self.used[j] {
                continue;
            }
            if self.labels1[i] == self.labels2[j] {
                same.push(j);
            } else {
                other.push(j);
            }
        }
        // Nearby indices first: sequences of the same layout line up.
        same.sort_by_key(|&j| j.abs_diff(i));
        other.sort_by_key(|&j| j.abs_diff(i));
        same.extend(other);
        same.push(DELETED);
        same
    }

    fn descend(&mut self, i: usize, cost: usize) {
        if i == self.n1 {
            let total = cost + self.completion_cost();
            if total < self.best {
                self.best = total;
            }
            return;
        }
        for target in self.candidates(i) {
            let c = cost + self.step_cost(i, target);
            if c >= self.best {
                continue;
            }
            self.mapping[i] = target;
            if target != DELETED {
                self.used[target] = true;
            }
            if c + self.lower_bound(i + 1) < self.best {
                self.descend(i + 1, c);
            }
            if target != DELETED {
                self.used[target] = false;
            }
            self.mapping[i] = DELETED;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markup::{build_graph, parse_markup, LayoutGrammar};

    fn graph(markup: &str) -> LayoutGraph {
        let g = LayoutGrammar::read2016();
        build_graph(&parse_markup(markup, &g).unwrap(), &g).unwrap()
    }

    #[test]
    fn identical_graphs() {
        let g = graph("<P><N></N><S><A></A><A></A><B></B></S><S><B></B></S></P>");
        assert_eq!(ged(&g, &g).unwrap(), 0);
    }

    #[test]
    fn against_null_graph() {
        let g = graph("<P><N></N><S><A></A><B></B></S></P>");
        assert_eq!(ged(&g, &LayoutGraph::null()).unwrap(), g.size());
        assert_eq!(ged(&LayoutGraph::null(), &g).unwrap(), g.size());
    }

    #[test]
    fn one_extra_annotation() {
        let a = graph("<P><N></N><S><B></B></S></P>");
        let b = graph("<P><N></N><S><A></A><B></B></S></P>");
        assert_eq!(ged(&a, &b).unwrap(), 3);
        assert_eq!(ged(&b, &a).unwrap(), 3);
    }

    #[test]
    fn swapped_siblings() {
        // Same nodes; the order edge flips direction: relabel-free, one
        // edge removed and one inserted.
        let g = LayoutGrammar::rimes2009();
        let a = build_graph(&parse_markup("<S></S><B></B>", &g).unwrap(), &g).unwrap();
        let b = build_graph(&parse_markup("<B></B><S></S>", &g).unwrap(), &g).unwrap();
        assert_eq!(ged(&a, &b).unwrap(), 2);
    }

    #[test]
    fn budget() {
        let g = graph("<P><N></N><S><A></A><B></B></S></P>");
        assert_eq!(
            ged_with_budget(&g, &g, 3),
            Err(MetricError::GraphTooLarge { nodes: 6, budget: 3 })
        );
    }
}
