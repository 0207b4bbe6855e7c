use std::collections::HashMap;

use super::ModelError;
use crate::markup::{ClassId, LayoutGrammar, Token, TokenSequence};

/// Token ids: alphabet characters in grammar order, then begin/end pairs
/// per class in declared order, then Eot. Sot comes last and is only ever
/// a decoder input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    chars: Vec<char>,
    classes: Vec<ClassId>,
    char_ids: HashMap<char, usize>,
}

impl Vocab {
    pub fn from_grammar(grammar: &LayoutGrammar) -> Self {
        let mut chars = Vec::new();
        let mut char_ids = HashMap::new();
        for c in grammar.alphabet().iter() {
            if let std::collections::hash_map::Entry::Vacant(e) = char_ids.entry(c) {
                e.insert(chars.len());
                chars.push(c);
            }
        }
        Vocab {
            chars,
            classes: grammar.class_ids(),
            char_ids,
        }
    }

    pub fn char_count(&self) -> usize {
        self.chars.len()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// |D|: characters, layout tokens and Eot.
    pub fn output_size(&self) -> usize {
        self.chars.len() + 2 * self.classes.len() + 1
    }

    /// Embedding rows: |D| plus Sot.
    pub fn input_size(&self) -> usize {
        self.output_size() + 1
    }

    pub fn eot(&self) -> usize {
        self.output_size() - 1
    }

    pub fn sot(&self) -> usize {
        self.output_size()
    }

    pub fn id(&self, t: Token) -> Result<usize, ModelError> {
        let class = |c: ClassId| {
            self.classes
                .iter()
                .position(|k| *k == c)
                .ok_or_else(|| ModelError::UnknownToken(t.to_string()))
        };
        Ok(match t {
            Token::Char(c) => *self.char_ids.get(&c).ok_or_else(|| ModelError::UnknownToken(t.to_string()))?,
            Token::Begin(c) => self.chars.len() + 2 * class(c)?,
            Token::End(c) => self.chars.len() + 2 * class(c)? + 1,
            Token::Eot => self.eot(),
            Token::Sot => self.sot(),
        })
    }

    pub fn token(&self, id: usize) -> Result<Token, ModelError> {
        let n = self.chars.len();
        match id {
            i if i < n => Ok(Token::Char(self.chars[i])),
            i if i < self.eot() => {
                let c = self.classes[(i - n) / 2];
                Ok(if (i - n).is_multiple_of(2) { Token::Begin(c) } else { Token::End(c) })
            }
            i if i == self.eot() => Ok(Token::Eot),
            i if i == self.sot() => Ok(Token::Sot),
            i => Err(ModelError::UnknownTokenId(i)),
        }
    }

    pub fn encode(&self, seq: &TokenSequence) -> Result<Vec<usize>, ModelError> {
        seq.iter().map(|t| self.id(*t)).collect()
    }

    /// Ids back to a transcript; sentinels are dropped.
    pub fn decode(&self, ids: &[usize]) -> Result<TokenSequence, ModelError> {
        let mut out = Vec::with_capacity(ids.len());
        for &i in ids {
            let t = self.token(i)?;
            if !t.is_sentinel() {
                out.push(t);
            }
        }
        Ok(TokenSequence::new(out).expect("sentinels removed"))
    }

    /// Decoder input for teacher forcing: Sot then the transcript.
    pub fn decoder_input(&self, seq: &TokenSequence) -> Result<Vec<usize>, ModelError> {
        let mut ids = vec![self.sot()];
        ids.extend(self.encode(seq)?);
        Ok(ids)
    }

    /// Training targets: the transcript then Eot.
    pub fn targets(&self, seq: &TokenSequence) -> Result<Vec<usize>, ModelError> {
        let mut ids = self.encode(seq)?;
        ids.push(self.eot());
        Ok(ids)
    }
}
