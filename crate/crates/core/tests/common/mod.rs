//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};

use docrec::markup::{ClassId, EdgeKind, LayoutGraph, NodeLabel};
use docrec::metrics::SubSequenceGroup;
use rand::Rng;

pub mod nets;

/// Edit distance by breadth-first search over strings. Intermediate lengths
/// never need to exceed the longer input: deletions can always be applied
/// before insertions.
pub fn levenshtein_bfs(a: &[u8], b: &[u8]) -> usize {
    let mut alphabet: Vec<u8> = a.iter().chain(b).copied().collect();
    alphabet.sort();
    alphabet.dedup();
    let cap = a.len().max(b.len());
    let mut seen: HashSet<Vec<u8>> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(a.to_vec());
    queue.push_back((a.to_vec(), 0));
    while let Some((s, d)) = queue.pop_front() {
        if s == b {
            return d;
        }
        let mut next = Vec::new();
        for i in 0..s.len() {
            let mut t = s.clone();
            t.remove(i);
            next.push(t);
            for &c in &alphabet {
                if c != s[i] {
                    let mut t = s.clone();
                    t[i] = c;
                    next.push(t);
                }
            }
        }
        if s.len() < cap {
            for i in 0..=s.len() {
                for &c in &alphabet {
                    let mut t = s.clone();
                    t.insert(i, c);
                    next.push(t);
                }
            }
        }
        for t in next {
            if seen.insert(t.clone()) {
                queue.push_back((t, d + 1));
            }
        }
    }
    unreachable!("b is always reachable")
}

fn edge_kind(g: &LayoutGraph, a: usize, b: usize) -> Option<EdgeKind> {
    if g.membership.contains(&(a, b)) {
        Some(EdgeKind::Membership)
    } else if g.order.contains(&(a, b)) {
        Some(EdgeKind::Order)
    } else {
        None
    }
}

/// Cost of the edit path induced by `map` (g1 node -> g2 node or deletion).
fn path_cost(g1: &LayoutGraph, g2: &LayoutGraph, map: &[Option<usize>]) -> usize {
    let mut cost = 0;
    let mut hit = vec![false; g2.node_count()];
    for (i, m) in map.iter().enumerate() {
        match m {
            None => cost += 1,
            Some(j) => {
                hit[*j] = true;
                if g1.nodes[i] != g2.nodes[*j] {
                    cost += 1;
                }
            }
        }
    }
    cost += hit.iter().filter(|h| !**h).count();
    // Every g1 edge is kept (possibly relabelled) or deleted.
    let mut covered = HashSet::new();
    for a in 0..g1.node_count() {
        for b in 0..g1.node_count() {
            let Some(k1) = edge_kind(g1, a, b) else { continue };
            match (map[a], map[b]) {
                (Some(x), Some(y)) => match edge_kind(g2, x, y) {
                    Some(k2) => {
                        covered.insert((x, y));
                        cost += usize::from(k1 != k2);
                    }
                    None => cost += 1,
                },
                _ => cost += 1,
            }
        }
    }
    // Remaining g2 edges are inserted.
    for (x, y, _) in g2.edges() {
        if !covered.contains(&(x, y)) {
            cost += 1;
        }
    }
    cost
}

/// Minimum over every injective partial node mapping of the induced edit
/// path cost.
pub fn ged_brute(g1: &LayoutGraph, g2: &LayoutGraph) -> usize {
    fn rec(g1: &LayoutGraph, g2: &LayoutGraph, map: &mut Vec<Option<usize>>, used: &mut [bool], best: &mut usize) {
        if map.len() == g1.node_count() {
            *best = (*best).min(path_cost(g1, g2, map));
            return;
        }
        map.push(None);
        rec(g1, g2, map, used, best);
        map.pop();
        for j in 0..g2.node_count() {
            if !used[j] {
                used[j] = true;
                map.push(Some(j));
                rec(g1, g2, map, used, best);
                map.pop();
                used[j] = false;
            }
        }
    }
    let mut best = usize::MAX;
    rec(g1, g2, &mut Vec::new(), &mut vec![false; g2.node_count()], &mut best);
    best
}

/// Random graph with at most one edge per ordered node pair.
pub fn random_graph(rng: &mut impl Rng, max_nodes: usize) -> LayoutGraph {
    let labels = [
        NodeLabel::Root,
        NodeLabel::Class(ClassId::new("A").unwrap()),
        NodeLabel::Class(ClassId::new("B").unwrap()),
        NodeLabel::Class(ClassId::new("C").unwrap()),
    ];
    let n = rng.gen_range(0..=max_nodes);
    let mut g = LayoutGraph::null();
    for _ in 0..n {
        g.nodes.push(labels[rng.gen_range(0..labels.len())]);
    }
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.gen_bool(0.25) {
                if rng.gen_bool(0.5) {
                    g.membership.push((a, b));
                } else {
                    g.order.push((a, b));
                }
            }
        }
    }
    g.root = if n > 0 { Some(0) } else { None };
    g
}

fn cer(pred: &str, gt: &str) -> f64 {
    let p: Vec<char> = pred.chars().collect();
    let g: Vec<char> = gt.chars().collect();
    let d = docrec::metrics::levenshtein(&p, &g);
    if g.is_empty() {
        if d == 0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        d as f64 / g.len() as f64
    }
}

/// Average precision by enumerating every assignment of predictions to
/// distinct ground-truth entries (or to nothing), keeping the single one
/// that follows the matching rule, and integrating the precision envelope
/// over the distinct recall levels.
pub fn ap_brute(gt: &SubSequenceGroup, pred: &SubSequenceGroup, threshold: f64) -> f64 {
    if gt.entries.is_empty() {
        return if pred.entries.is_empty() { 1.0 } else { 0.0 };
    }
    let n = pred.entries.len();
    let m = gt.entries.len();
    let mut all: Vec<Vec<Option<usize>>> = vec![Vec::new()];
    for _ in 0..n {
        let mut next = Vec::new();
        for a in &all {
            next.push([a.clone(), vec![None]].concat());
            for j in 0..m {
                if !a.contains(&Some(j)) {
                    next.push([a.clone(), vec![Some(j)]].concat());
                }
            }
        }
        all = next;
    }
    let follows_rule = |a: &Vec<Option<usize>>| {
        (0..n).all(|i| {
            let free: Vec<usize> = (0..m).filter(|j| !a[..i].contains(&Some(*j))).collect();
            let errs: Vec<f64> = free
                .iter()
                .map(|&j| cer(&pred.entries[i].text, &gt.entries[j].text))
                .collect();
            let min = errs.iter().copied().fold(f64::INFINITY, f64::min);
            match a[i] {
                None => min >= threshold || min.is_nan(),
                Some(j) => {
                    let first_min = free[errs.iter().position(|&e| e == min).unwrap()];
                    min < threshold && j == first_min
                }
            }
        })
    };
    let chosen: Vec<&Vec<Option<usize>>> = all.iter().filter(|a| follows_rule(a)).collect();
    assert_eq!(chosen.len(), 1, "the rule determines a unique assignment");
    let a = chosen[0];
    let mut points = Vec::new();
    let mut tp = 0;
    for (i, x) in a.iter().enumerate() {
        tp += usize::from(x.is_some());
        points.push((tp as f64 / m as f64, tp as f64 / (i + 1) as f64));
    }
    let mut levels: Vec<f64> = points.iter().map(|p| p.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for r in levels {
        let envelope = points
            .iter()
            .filter(|p| p.0 >= r)
            .map(|p| p.1)
            .fold(0.0, f64::max);
        ap += (r - prev) * envelope;
        prev = r;
    }
    ap
}

/// Random group of at most `max` short entries over a tiny alphabet, so
/// that CERs land on both sides of the thresholds.
pub fn random_group(rng: &mut impl Rng, max: usize) -> SubSequenceGroup {
    let n = rng.gen_range(0..=max);
    let entries = (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=8);
            let text: String = (0..len).map(|_| ['a', 'b', 'c'][rng.gen_range(0..3)]).collect();
            docrec::metrics::SubSequence {
                text,
                confidence: rng.gen_range(0..5) as f64 / 4.0,
            }
        })
        .collect::<Vec<_>>();
    let mut g = SubSequenceGroup {
        class: ClassId::new("X").unwrap(),
        entries,
    };
    g.entries.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    g
}
