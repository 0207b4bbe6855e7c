use serde::{Deserialize, Serialize};

use super::{ClassId, LayoutGrammar, Token, TokenSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditKind {
    Added,
    Removed,
}

/// One layout-token edition made by [`post_process`].
///
/// Removals are positioned in the input sequence, additions in the
/// corrected sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edit {
    pub position: usize,
    pub kind: EditKind,
    pub token: Token,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PostProcessReport {
    pub corrected: TokenSequence,
    pub edits: Vec<Edit>,
    /// Duplicated spaces dropped by the text pass. Not layout editions.
    pub spaces_removed: usize,
    /// For each corrected token, its index in the input (`None` if inserted).
    pub origin: Vec<Option<usize>>,
}

impl PostProcessReport {
    /// Number of layout-token additions and removals.
    pub fn edit_count(&self) -> usize {
        self.edits.len()
    }

    /// Carries per-token values (e.g. probabilities) over to the corrected
    /// sequence; inserted tokens get `fill`.
    pub fn realign<T: Copy>(&self, values: &[T], fill: T) -> Vec<T> {
        self.origin
            .iter()
            .map(|o| o.and_then(|i| values.get(i).copied()).unwrap_or(fill))
            .collect()
    }
}

type Tagged = (Token, Option<usize>);

/// Rule-based repair of raw predictions.
///
/// A forward pass balances the layout tokens: an entity that cannot contain
/// the next begin token is closed right before it, ends for entities that
/// are still open deeper in the stack close the entities above them, and
/// isolated ends (or tokens of unknown classes) are dropped. A second pass
/// wraps entities in whichever ancestors the grammar requires but the
/// prediction omitted. Finally runs of spaces are collapsed.
pub fn post_process(seq: &TokenSequence, grammar: &LayoutGrammar) -> PostProcessReport {
    let mut removed = Vec::new();
    let balanced = balance_pass(seq, grammar, &mut removed);
    let tree = build_tree(&balanced);
    let mut repaired = Vec::with_capacity(balanced.len());
    emit_children(&tree, None, grammar, &mut repaired);

    let mut out: Vec<Tagged> = Vec::with_capacity(repaired.len());
    let mut spaces_removed = 0;
    for item in repaired {
        if item.0 == Token::Char(' ') && out.last().is_some_and(|last| last.0 == Token::Char(' ')) {
            spaces_removed += 1;
            continue;
        }
        out.push(item);
    }

    let mut edits = removed;
    edits.extend(out.iter().enumerate().filter_map(|(i, (t, o))| {
        o.is_none().then_some(Edit {
            position: i,
            kind: EditKind::Added,
            token: *t,
        })
    }));
    let (tokens, origin) = out.into_iter().unzip();
    PostProcessReport {
        corrected: TokenSequence::from_vec_unchecked(tokens),
        edits,
        spaces_removed,
        origin,
    }
}

fn balance_pass(seq: &TokenSequence, grammar: &LayoutGrammar, removed: &mut Vec<Edit>) -> Vec<Tagged> {
    let mut out: Vec<Tagged> = Vec::with_capacity(seq.len() + 8);
    let mut stack: Vec<ClassId> = Vec::new();
    let mut remove = |position: usize, token: Token| {
        removed.push(Edit {
            position,
            kind: EditKind::Removed,
            token,
        })
    };

    for (i, &token) in seq.iter().enumerate() {
        match token {
            Token::Char(_) => out.push((token, Some(i))),
            Token::Sot | Token::Eot => remove(i, token),
            Token::Begin(c) if !grammar.contains_class(c) => remove(i, token),
            Token::End(c) if !grammar.contains_class(c) => remove(i, token),
            Token::Begin(c) => {
                while let Some(&top) = stack.last() {
                    if grammar.is_ancestor(top, c) {
                        break;
                    }
                    out.push((Token::End(top), None));
                    stack.pop();
                }
                out.push((token, Some(i)));
                stack.push(c);
            }
            Token::End(c) => {
                if stack.contains(&c) {
                    while let Some(top) = stack.pop() {
                        if top == c {
                            break;
                        }
                        out.push((Token::End(top), None));
                    }
                    out.push((token, Some(i)));
                } else {
                    remove(i, token);
                }
            }
        }
    }
    while let Some(top) = stack.pop() {
        out.push((Token::End(top), None));
    }
    out
}

enum Node {
    Char(Tagged),
    Entity {
        class: ClassId,
        begin: Option<usize>,
        end: Option<usize>,
        children: Vec<Node>,
    },
}

fn build_tree(balanced: &[Tagged]) -> Vec<Node> {
    // (class, begin origin, children) frames; the bottom frame is the root.
    let mut frames: Vec<(Option<ClassId>, Option<usize>, Vec<Node>)> = vec![(None, None, Vec::new())];
    for &(token, origin) in balanced {
        match token {
            Token::Begin(c) => frames.push((Some(c), origin, Vec::new())),
            Token::End(_) => {
                let (class, begin, children) = frames.pop().expect("balanced input");
                frames.last_mut().expect("root frame").2.push(Node::Entity {
                    class: class.expect("entity frame"),
                    begin,
                    end: origin,
                    children,
                });
            }
            _ => frames.last_mut().expect("root frame").2.push(Node::Char((token, origin))),
        }
    }
    debug_assert_eq!(frames.len(), 1);
    frames.pop().map(|f| f.2).unwrap_or_default()
}

/// Classes that must be inserted between `parent` and an entity of `class`,
/// outermost first.
fn missing_chain(class: ClassId, parent: Option<ClassId>, grammar: &LayoutGrammar) -> Vec<ClassId> {
    let mut chain: Vec<ClassId> = grammar
        .ancestors(class)
        .into_iter()
        .take_while(|a| Some(*a) != parent)
        .collect();
    chain.reverse();
    chain
}

fn emit_children(children: &[Node], parent: Option<ClassId>, grammar: &LayoutGrammar, out: &mut Vec<Tagged>) {
    let mut i = 0;
    while i < children.len() {
        match &children[i] {
            Node::Char(t) => {
                out.push(*t);
                i += 1;
            }
            Node::Entity { class, .. } => {
                let chain = missing_chain(*class, parent, grammar);
                if chain.is_empty() {
                    emit_entity(&children[i], grammar, out);
                    i += 1;
                    continue;
                }
                // Consecutive siblings lacking the same ancestors share one wrapper.
                let mut j = i + 1;
                while j < children.len() {
                    match &children[j] {
                        Node::Entity { class: next, .. } if missing_chain(*next, parent, grammar) == chain => j += 1,
                        _ => break,
                    }
                }
                for &c in &chain {
                    out.push((Token::Begin(c), None));
                }
                for child in &children[i..j] {
                    emit_entity(child, grammar, out);
                }
                for &c in chain.iter().rev() {
                    out.push((Token::End(c), None));
                }
                i = j;
            }
        }
    }
}

fn emit_entity(node: &Node, grammar: &LayoutGrammar, out: &mut Vec<Tagged>) {
    if let Node::Entity {
        class,
        begin,
        end,
        children,
    } = node
    {
        out.push((Token::Begin(*class), *begin));
        emit_children(children, Some(*class), grammar, out);
        out.push((Token::End(*class), *end));
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_markup, serialize, test_grammar, validate};
    use super::*;

    fn run(markup: &str, grammar: &LayoutGrammar) -> PostProcessReport {
        post_process(&parse_markup(markup, grammar).unwrap(), grammar)
    }

    #[test]
    fn closes_before_second_begin_and_drops_isolated_end() {
        let g = test_grammar();
        let r = run("<X><Y></Y></Z>", &g);
        assert_eq!(serialize(&r.corrected), "<X></X><Y></Y>");
        assert_eq!(r.edit_count(), 2);
        let kinds: Vec<_> = r.edits.iter().map(|e| (e.kind, e.token.to_string())).collect();
        assert!(kinds.contains(&(EditKind::Removed, "</Z>".to_string())));
        assert!(kinds.contains(&(EditKind::Added, "</X>".to_string())));
    }

    #[test]
    fn inserts_required_parent() {
        let g = test_grammar();
        let r = run("<A></Y>", &g);
        assert_eq!(serialize(&r.corrected), "<B><A></A></B>");
        assert_eq!(r.edit_count(), 4);
    }

    #[test]
    fn valid_input_is_a_fixed_point() {
        let g = LayoutGrammar::read2016();
        let r = run("<P><N>3</N><S><A>x</A><B>y z</B></S></P>", &g);
        assert_eq!(r.edit_count(), 0);
        assert_eq!(r.spaces_removed, 0);
        assert_eq!(serialize(&r.corrected), "<P><N>3</N><S><A>x</A><B>y z</B></S></P>");
        assert!(r.origin.iter().all(Option::is_some));
    }

    #[test]
    fn collapses_spaces_without_counting_them() {
        let g = test_grammar();
        let r = run("<X>a   b</X>", &g);
        assert_eq!(serialize(&r.corrected), "<X>a b</X>");
        assert_eq!(r.edit_count(), 0);
        assert_eq!(r.spaces_removed, 2);
    }

    #[test]
    fn read_siblings_share_inserted_section() {
        let g = LayoutGrammar::read2016();
        let r = run("<A>a</A><B>b</B>", &g);
        assert_eq!(serialize(&r.corrected), "<P><S><A>a</A><B>b</B></S></P>");
        assert_eq!(r.edit_count(), 4);
        assert!(validate(&r.corrected, &g).is_empty());
    }

    #[test]
    fn closes_entities_above_a_deeper_end() {
        let g = LayoutGrammar::read2016();
        let r = run("<P><S><A>x</S></P>", &g);
        assert_eq!(serialize(&r.corrected), "<P><S><A>x</A></S></P>");
        assert_eq!(r.edit_count(), 1);
    }

    #[test]
    fn realign_fills_inserted_tokens() {
        let g = test_grammar();
        let seq = parse_markup("<X>ab", &g).unwrap();
        let r = post_process(&seq, &g);
        assert_eq!(serialize(&r.corrected), "<X>ab</X>");
        assert_eq!(r.realign(&[0.9, 0.8, 0.7], 0.0), vec![0.9, 0.8, 0.7, 0.0]);
    }
}
