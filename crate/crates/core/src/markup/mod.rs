//! Layout-token alphabet, XML-like transcript markup, per-dataset grammars,
//! layout graphs and rule-based repair of predicted sequences.

mod grammar;
mod graph;
mod parse;
mod postprocess;
mod token;
mod validate;

pub use grammar::{Alphabet, LayoutClass, LayoutGrammar, ReadingOrder, BUILTIN_GRAMMARS};
pub use graph::{build_graph, EdgeKind, LayoutGraph, NodeLabel};
pub use parse::{extract_layout, parse_markup, serialize, strip_layout};
pub use postprocess::{post_process, Edit, EditKind, PostProcessReport};
pub use token::{ClassId, Token, TokenSequence};
pub use validate::{validate, Diagnostic};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MarkupError {
    #[error("unknown layout tag `{tag}` at byte {offset}")]
    UnknownTag { tag: String, offset: usize },
    #[error("character {ch:?} at byte {offset} is not in the alphabet")]
    IllegalCharacter { ch: char, offset: usize },
    #[error("malformed tag at byte {offset}")]
    MalformedTag { offset: usize },
    #[error("invalid class id `{0}`")]
    InvalidClassId(String),
    #[error("sentinel token at position {position} inside a transcript")]
    SentinelInBody { position: usize },
    #[error("unbalanced layout tokens at position {position}")]
    UnbalancedSequence { position: usize },
    #[error("<{class}> at position {position} violates the class hierarchy")]
    HierarchyViolation { position: usize, class: ClassId },
    #[error("grammar line {line}: {message}")]
    Grammar { line: usize, message: String },
}

/// Flat X/Y/Z classes plus A nested in B, the shapes used by the worked
/// examples.
#[cfg(test)]
pub(crate) fn test_grammar() -> LayoutGrammar {
    LayoutGrammar::parse(
        "[classes]\nX - 0 * \nY - 0 *\nZ - 0 *\nB - 0 *\nA B 0 *\n\
         [alphabet]\nU+0020..U+003B\nU+003D\nU+003F..U+007E\n[order]\ntop-bottom-left-right\n",
    )
    .unwrap()
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn id(s: &str) -> ClassId {
        ClassId::new(s).unwrap()
    }

    fn any_token() -> impl Strategy<Value = Token> {
        let classes = ["P", "N", "S", "A", "B", "Q"];
        prop_oneof![
            3 => prop::sample::select(vec!['a', 'b', ' ']).prop_map(Token::Char),
            2 => prop::sample::select(classes.to_vec()).prop_map(|c| Token::Begin(id(c))),
            2 => prop::sample::select(classes.to_vec()).prop_map(|c| Token::End(id(c))),
        ]
    }

    fn any_sequence() -> impl Strategy<Value = TokenSequence> {
        prop::collection::vec(any_token(), 0..40).prop_map(|t| TokenSequence::new(t).unwrap())
    }

    proptest! {
        #[test]
        fn post_process_output_validates(seq in any_sequence()) {
            let g = LayoutGrammar::read2016();
            let r = post_process(&seq, &g);
            prop_assert!(validate(&r.corrected, &g).is_empty());
            prop_assert!(build_graph(&r.corrected, &g).is_ok());
            prop_assert_eq!(r.origin.len(), r.corrected.len());
        }

        #[test]
        fn post_process_is_idempotent(seq in any_sequence()) {
            let g = LayoutGrammar::read2016();
            let once = post_process(&seq, &g);
            let twice = post_process(&once.corrected, &g);
            prop_assert_eq!(twice.edit_count(), 0);
            prop_assert_eq!(twice.spaces_removed, 0);
            prop_assert_eq!(&twice.corrected, &once.corrected);
        }

        #[test]
        fn post_process_keeps_text(seq in any_sequence()) {
            let g = LayoutGrammar::read2016();
            let r = post_process(&seq, &g);
            let collapse = |s: String| {
                let mut out = String::new();
                for c in s.chars() {
                    if !(c == ' ' && out.ends_with(' ')) { out.push(c); }
                }
                out
            };
            // Collapsing spaces across removed tags can only merge more runs.
            prop_assert_eq!(collapse(r.corrected.text()), collapse(seq.text()));
        }

        #[test]
        fn strip_and_extract_partition(seq in any_sequence()) {
            let text = strip_layout(&seq);
            let layout = extract_layout(&seq);
            let mut t = text.iter();
            let mut l = layout.iter();
            let rebuilt: Vec<Token> = seq
                .iter()
                .map(|tok| if tok.is_char() { *t.next().unwrap() } else { *l.next().unwrap() })
                .collect();
            prop_assert_eq!(rebuilt.as_slice(), seq.tokens());
            prop_assert_eq!(text.len() + layout.len(), seq.len());
        }

        #[test]
        fn serialize_parse_round_trip(seq in any_sequence()) {
            let g = LayoutGrammar::read2016();
            let valid = post_process(&seq, &g).corrected;
            let text = serialize(&valid);
            let back = parse_markup(&text, &g).unwrap();
            prop_assert_eq!(&back, &valid);
            prop_assert_eq!(serialize(&back), text);
        }
    }
}
