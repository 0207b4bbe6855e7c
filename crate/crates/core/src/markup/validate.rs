use std::fmt;

use super::{ClassId, LayoutGrammar, Token, TokenSequence};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    /// End token with no matching open entity.
    IsolatedEnd { position: usize, class: ClassId },
    /// Begin token never closed (or closed out of order).
    UnclosedBegin { position: usize, class: ClassId },
    /// Entity nested under the wrong parent.
    HierarchyViolation {
        position: usize,
        class: ClassId,
        expected_parent: Option<ClassId>,
        found_parent: Option<ClassId>,
    },
    UnknownClass { position: usize, class: ClassId },
}

impl Diagnostic {
    pub fn position(&self) -> usize {
        match self {
            Diagnostic::IsolatedEnd { position, .. }
            | Diagnostic::UnclosedBegin { position, .. }
            | Diagnostic::HierarchyViolation { position, .. }
            | Diagnostic::UnknownClass { position, .. } => *position,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let root = |p: &Option<ClassId>| p.map_or("document root".to_string(), |c| format!("<{c}>"));
        match self {
            Diagnostic::IsolatedEnd { position, class } => {
                write!(f, "{position}: isolated end token </{class}>")
            }
            Diagnostic::UnclosedBegin { position, class } => {
                write!(f, "{position}: <{class}> is never closed")
            }
            Diagnostic::HierarchyViolation {
                position,
                class,
                expected_parent,
                found_parent,
            } => write!(
                f,
                "{position}: <{class}> belongs under {} but sits under {}",
                root(expected_parent),
                root(found_parent)
            ),
            Diagnostic::UnknownClass { position, class } => {
                write!(f, "{position}: class `{class}` is not in the grammar")
            }
        }
    }
}

/// Checks balance and hierarchy. Balance problems come first, then
/// hierarchy problems, each group in position order.
pub fn validate(seq: &TokenSequence, grammar: &LayoutGrammar) -> Vec<Diagnostic> {
    let mut balance = Vec::new();
    let mut hierarchy = Vec::new();
    let mut stack: Vec<(ClassId, usize)> = Vec::new();

    for (position, token) in seq.iter().enumerate() {
        match *token {
            Token::Begin(class) => {
                if !grammar.contains_class(class) {
                    balance.push(Diagnostic::UnknownClass { position, class });
                }
                let found_parent = stack.last().map(|&(c, _)| c);
                let expected_parent = grammar.parent_of(class);
                if grammar.contains_class(class) && found_parent != expected_parent {
                    hierarchy.push(Diagnostic::HierarchyViolation {
                        position,
                        class,
                        expected_parent,
                        found_parent,
                    });
                }
                stack.push((class, position));
            }
            Token::End(class) => {
                if !grammar.contains_class(class) {
                    balance.push(Diagnostic::UnknownClass { position, class });
                }
                match stack.iter().rposition(|&(c, _)| c == class) {
                    Some(depth) => {
                        for (c, p) in stack.drain(depth + 1..) {
                            balance.push(Diagnostic::UnclosedBegin {
                                position: p,
                                class: c,
                            });
                        }
                        stack.pop();
                    }
                    None => balance.push(Diagnostic::IsolatedEnd { position, class }),
                }
            }
            Token::Char(_) | Token::Sot | Token::Eot => {}
        }
    }
    for (c, p) in stack {
        balance.push(Diagnostic::UnclosedBegin { position: p, class: c });
    }
    balance.sort_by_key(Diagnostic::position);
    hierarchy.sort_by_key(Diagnostic::position);
    balance.extend(hierarchy);
    balance
}
