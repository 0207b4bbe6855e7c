use std::cmp::Ordering;
use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::MarkupError;

/// Short ASCII tag naming a layout class (`B`, `page`, `date_loc`...).
///
/// Stored inline so tokens stay `Copy`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClassId {
    len: u8,
    bytes: [u8; ClassId::MAX_LEN],
}

impl ClassId {
    pub const MAX_LEN: usize = 15;

    pub fn new(tag: &str) -> Result<Self, MarkupError> {
        let valid = !tag.is_empty()
            && tag.len() <= Self::MAX_LEN
            && tag
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-');
        if !valid {
            return Err(MarkupError::InvalidClassId(tag.to_string()));
        }
        let mut bytes = [0u8; Self::MAX_LEN];
        bytes[..tag.len()].copy_from_slice(tag.as_bytes());
        Ok(ClassId {
            len: tag.len() as u8,
            bytes,
        })
    }

    pub fn as_str(&self) -> &str {
        // Only ASCII is ever stored.
        std::str::from_utf8(&self.bytes[..self.len as usize]).expect("ascii class id")
    }
}

impl fmt::Debug for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ClassId({})", self.as_str())
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassId {
    type Err = MarkupError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassId::new(s)
    }
}

impl PartialOrd for ClassId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ClassId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.as_str().cmp(other.as_str())
    }
}

impl Serialize for ClassId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ClassId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        ClassId::new(&s).map_err(serde::de::Error::custom)
    }
}

/// One symbol of the recognition alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Token {
    Char(char),
    Begin(ClassId),
    End(ClassId),
    /// Start-of-transcription; only ever fed to the decoder.
    Sot,
    /// End-of-transcription; only ever produced by the decoder.
    Eot,
}

impl Token {
    pub fn is_layout(&self) -> bool {
        matches!(self, Token::Begin(_) | Token::End(_))
    }

    pub fn is_char(&self) -> bool {
        matches!(self, Token::Char(_))
    }

    pub fn is_sentinel(&self) -> bool {
        matches!(self, Token::Sot | Token::Eot)
    }

    pub fn class(&self) -> Option<ClassId> {
        match self {
            Token::Begin(c) | Token::End(c) => Some(*c),
            _ => None,
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Char(c) => write!(f, "{c}"),
            Token::Begin(c) => write!(f, "<{c}>"),
            Token::End(c) => write!(f, "</{c}>"),
            Token::Sot => f.write_str("<sot>"),
            Token::Eot => f.write_str("<eot>"),
        }
    }
}

/// Transcript body: characters and layout tokens, never sentinels.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence(Vec<Token>);

impl TokenSequence {
    pub fn new(tokens: Vec<Token>) -> Result<Self, MarkupError> {
        if let Some(position) = tokens.iter().position(Token::is_sentinel) {
            return Err(MarkupError::SentinelInBody { position });
        }
        Ok(TokenSequence(tokens))
    }

    pub fn empty() -> Self {
        TokenSequence(Vec::new())
    }

    /// Plain text, one `Char` per codepoint.
    pub fn from_text(text: &str) -> Self {
        TokenSequence(text.chars().map(Token::Char).collect())
    }

    pub fn tokens(&self) -> &[Token] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<Token> {
        self.0
    }

    /// The characters of the sequence, layout tokens dropped.
    pub fn text(&self) -> String {
        self.0
            .iter()
            .filter_map(|t| match t {
                Token::Char(c) => Some(*c),
                _ => None,
            })
            .collect()
    }

    pub fn layout_token_count(&self) -> usize {
        self.0.iter().filter(|t| t.is_layout()).count()
    }

    pub(crate) fn from_vec_unchecked(tokens: Vec<Token>) -> Self {
        debug_assert!(!tokens.iter().any(Token::is_sentinel));
        TokenSequence(tokens)
    }
}

impl Deref for TokenSequence {
    type Target = [Token];
    fn deref(&self) -> &[Token] {
        &self.0
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.0 {
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a TokenSequence {
    type Item = &'a Token;
    type IntoIter = std::slice::Iter<'a, Token>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
