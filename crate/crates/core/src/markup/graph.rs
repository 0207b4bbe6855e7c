use std::fmt;

use serde::{Deserialize, Serialize};

use super::{validate, ClassId, Diagnostic, LayoutGrammar, MarkupError, Token, TokenSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeLabel {
    /// The document node `D`.
    Root,
    Class(ClassId),
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeLabel::Root => f.write_str("D"),
            NodeLabel::Class(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Parent to child.
    Membership,
    /// Sibling to next sibling in reading order.
    Order,
}

/// Oriented graph of layout entities: membership edges form a tree under
/// the root, order edges chain consecutive siblings.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutGraph {
    pub nodes: Vec<NodeLabel>,
    pub membership: Vec<(usize, usize)>,
    pub order: Vec<(usize, usize)>,
    /// `None` only for the null graph.
    pub root: Option<usize>,
}

impl LayoutGraph {
    /// The graph with no nodes and no edges.
    pub fn null() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.membership.len() + self.order.len()
    }

    /// `n_n + n_e`, the normaliser of the layout error rate.
    pub fn size(&self) -> usize {
        self.node_count() + self.edge_count()
    }

    /// All edges with their kind.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, EdgeKind)> + '_ {
        self.membership
            .iter()
            .map(|&(a, b)| (a, b, EdgeKind::Membership))
            .chain(self.order.iter().map(|&(a, b)| (a, b, EdgeKind::Order)))
    }

    pub fn children(&self, node: usize) -> Vec<usize> {
        self.membership.iter().filter(|e| e.0 == node).map(|e| e.1).collect()
    }

    /// Splits a document graph into page sub-graphs, each rooted at its
    /// page node. Grammars without a page class yield the whole graph as a
    /// single page.
    pub fn pages(&self, grammar: &LayoutGrammar) -> Vec<LayoutGraph> {
        let Some(root) = self.root else {
            return Vec::new();
        };
        match grammar.page_class() {
            None => vec![self.clone()],
            Some(page) => self
                .children(root)
                .into_iter()
                .filter(|&c| self.nodes[c] == NodeLabel::Class(page))
                .map(|c| self.subgraph(c))
                .collect(),
        }
    }

    /// The sub-graph made of `top` and its descendants.
    pub fn subgraph(&self, top: usize) -> LayoutGraph {
        let mut keep = vec![None; self.nodes.len()];
        let mut order_of_visit = vec![top];
        let mut i = 0;
        while i < order_of_visit.len() {
            let n = order_of_visit[i];
            order_of_visit.extend(self.children(n));
            i += 1;
        }
        order_of_visit.sort_unstable();
        for (new, &old) in order_of_visit.iter().enumerate() {
            keep[old] = Some(new);
        }
        let remap = |edges: &[(usize, usize)]| -> Vec<(usize, usize)> {
            edges
                .iter()
                .filter_map(|&(a, b)| Some((keep[a]?, keep[b]?)))
                .collect()
        };
        LayoutGraph {
            nodes: order_of_visit.iter().map(|&o| self.nodes[o]).collect(),
            membership: remap(&self.membership),
            order: remap(&self.order),
            root: keep[top],
        }
    }
}

/// Maps a balanced, grammar-valid sequence onto its layout graph.
///
/// Characters are ignored, so the full transcript or its layout-only
/// projection give the same graph.
pub fn build_graph(layout_seq: &TokenSequence, grammar: &LayoutGrammar) -> Result<LayoutGraph, MarkupError> {
    if let Some(d) = validate(layout_seq, grammar).into_iter().next() {
        return Err(match d {
            Diagnostic::HierarchyViolation { position, class, .. } => {
                MarkupError::HierarchyViolation { position, class }
            }
            other => MarkupError::UnbalancedSequence {
                position: other.position(),
            },
        });
    }

    let mut graph = LayoutGraph {
        nodes: vec![NodeLabel::Root],
        membership: Vec::new(),
        order: Vec::new(),
        root: Some(0),
    };
    // (node, last child seen) per open entity, root at the bottom.
    let mut stack: Vec<(usize, Option<usize>)> = vec![(0, None)];
    for token in layout_seq.iter() {
        match *token {
            Token::Begin(c) => {
                let node = graph.nodes.len();
                graph.nodes.push(NodeLabel::Class(c));
                let (parent, last) = stack.last_mut().expect("root stays on the stack");
                graph.membership.push((*parent, node));
                if let Some(prev) = last.replace(node) {
                    graph.order.push((prev, node));
                }
                stack.push((node, None));
            }
            Token::End(_) => {
                stack.pop();
            }
            _ => {}
        }
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::super::{parse_markup, test_grammar};
    use super::*;

    fn label(s: &str) -> NodeLabel {
        NodeLabel::Class(ClassId::new(s).unwrap())
    }

    #[test]
    fn minimal_graph() {
        let g = test_grammar();
        let graph = build_graph(&parse_markup("<X></X>", &g).unwrap(), &g).unwrap();
        assert_eq!(graph.nodes, vec![NodeLabel::Root, label("X")]);
        assert_eq!(graph.membership, vec![(0, 1)]);
        assert!(graph.order.is_empty());
    }

    #[test]
    fn empty_sequence_is_root_only() {
        let g = LayoutGrammar::read2016();
        let graph = build_graph(&TokenSequence::empty(), &g).unwrap();
        assert_eq!(graph.node_count(), 1);
        assert_eq!(graph.edge_count(), 0);
        assert!(graph.pages(&g).is_empty());
    }

    #[test]
    fn read_page_graph() {
        let g = LayoutGrammar::read2016();
        let seq = parse_markup("<P><N></N><S><A></A><B></B></S></P>", &g).unwrap();
        let graph = build_graph(&seq, &g).unwrap();
        assert_eq!(
            graph.nodes,
            vec![NodeLabel::Root, label("P"), label("N"), label("S"), label("A"), label("B")]
        );
        assert_eq!(graph.membership, vec![(0, 1), (1, 2), (1, 3), (3, 4), (3, 5)]);
        assert_eq!(graph.order, vec![(2, 3), (4, 5)]);
    }

    #[test]
    fn double_page_decomposes() {
        let g = LayoutGrammar::read2016();
        let seq = parse_markup("<P><N></N></P><P><S><B></B></S></P>", &g).unwrap();
        let graph = build_graph(&seq, &g).unwrap();
        assert_eq!(graph.order.len(), 1); // page to page
        let pages = graph.pages(&g);
        assert_eq!(pages.len(), 2);
        assert_eq!(pages[0].nodes, vec![label("P"), label("N")]);
        assert_eq!(pages[0].membership, vec![(0, 1)]);
        assert_eq!(pages[1].nodes, vec![label("P"), label("S"), label("B")]);
        assert_eq!(pages[1].size(), 5);
        assert_eq!(pages[1].root, Some(0));
    }

    #[test]
    fn rejects_invalid_sequences() {
        let g = LayoutGrammar::read2016();
        let unbalanced = parse_markup("<P>", &g).unwrap();
        assert!(matches!(build_graph(&unbalanced, &g), Err(MarkupError::UnbalancedSequence { .. })));
        let orphan = parse_markup("<B></B>", &g).unwrap();
        assert!(matches!(build_graph(&orphan, &g), Err(MarkupError::HierarchyViolation { .. })));
    }
}
