use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use super::font::{render_line, GlyphSet};
use super::stylesheet::Span;
use super::SynthError;
use crate::markup::{ClassId, LayoutGrammar, Token, TokenSequence};
use crate::raster::{Raster, WHITE};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineRecord {
    pub text: String,
    pub class: ClassId,
}

/// Text lines tagged with the layout class they were taken from.
#[derive(Clone, Debug, Default)]
pub struct LineDataset {
    records: Vec<LineRecord>,
    by_class: BTreeMap<ClassId, Vec<usize>>,
}

fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl LineDataset {
    /// Collapses whitespace; rejects empty lines, unknown classes and
    /// characters outside the grammar alphabet.
    pub fn new(records: Vec<LineRecord>, grammar: &LayoutGrammar) -> Result<Self, SynthError> {
        let mut out = LineDataset::default();
        for (i, r) in records.into_iter().enumerate() {
            let bad = |message: String| SynthError::Dataset { line: i + 1, message };
            let text = normalize(&r.text);
            if text.is_empty() {
                return Err(bad("empty line".into()));
            }
            if !grammar.contains_class(r.class) {
                return Err(bad(format!("class {} is not in grammar {}", r.class, grammar.name())));
            }
            if let Some(c) = text.chars().find(|c| !grammar.alphabet().contains(*c)) {
                return Err(bad(format!("character {c:?} is not in the alphabet")));
            }
            out.by_class.entry(r.class).or_default().push(out.records.len());
            out.records.push(LineRecord { text, class: r.class });
        }
        Ok(out)
    }

    /// `class TAB text` per line; blank lines and `#` comments skipped.
    pub fn parse_tsv(text: &str, grammar: &LayoutGrammar) -> Result<Self, SynthError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (class, text) = line.split_once('\t').ok_or_else(|| SynthError::Dataset {
                line: i + 1,
                message: "expected `class TAB text`".into(),
            })?;
            let class = ClassId::new(class.trim()).map_err(|e| SynthError::Dataset {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(LineRecord {
                text: text.to_string(),
                class,
            });
        }
        Self::new(records, grammar)
    }

    pub fn from_file(path: impl AsRef<Path>, grammar: &LayoutGrammar) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| SynthError::Io(e.to_string()))?;
        Self::parse_tsv(&text, grammar)
    }

    pub fn to_tsv(&self) -> String {
        self.records.iter().map(|r| format!("{}\t{}\n", r.class, r.text)).collect()
    }

    /// Cuts the text of each innermost entity of the given transcripts into
    /// lines of at most `max_chars` characters, breaking at spaces where
    /// possible.
    pub fn from_documents(docs: &[TokenSequence], grammar: &LayoutGrammar, max_chars: usize) -> Result<Self, SynthError> {
        let max_chars = max_chars.max(1);
        let mut records = Vec::new();
        for doc in docs {
            let mut open: Vec<(ClassId, String)> = Vec::new();
            for tok in doc.iter() {
                match *tok {
                    Token::Begin(c) => open.push((c, String::new())),
                    Token::Char(ch) => {
                        if let Some((_, t)) = open.last_mut() {
                            t.push(ch);
                        }
                    }
                    Token::End(c) => {
                        if let Some(at) = open.iter().rposition(|(o, _)| *o == c) {
                            let (class, text) = open.remove(at);
                            open.truncate(at);
                            for piece in wrap(&normalize(&text), max_chars) {
                                records.push(LineRecord { text: piece, class });
                            }
                        }
                    }
                    Token::Sot | Token::Eot => {}
                }
            }
        }
        Self::new(records, grammar)
    }

    pub fn records(&self) -> &[LineRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_class(&self, class: ClassId) -> bool {
        self.by_class.contains_key(&class)
    }

    pub fn random_text(&self, class: ClassId, rng: &mut impl Rng) -> Result<&str, SynthError> {
        let ids = self.by_class.get(&class).ok_or(SynthError::ExhaustedLines(class))?;
        Ok(&self.records[ids[rng.gen_range(0..ids.len())]].text)
    }

    pub fn random_any(&self, rng: &mut impl Rng) -> Option<&LineRecord> {
        if self.records.is_empty() {
            None
        } else {
            Some(&self.records[rng.gen_range(0..self.records.len())])
        }
    }
}

fn wrap(text: &str, max_chars: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for word in text.split(' ') {
        let mut word: Vec<char> = word.chars().collect();
        while word.len() > max_chars {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(word.drain(..max_chars).collect());
        }
        if word.is_empty() {
            continue;
        }
        let needed = cur.chars().count() + usize::from(!cur.is_empty()) + word.len();
        if needed > max_chars && !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if !cur.is_empty() {
            cur.push(' ');
        }
        cur.extend(word);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// A printed line for pre-training: random supporting font and size, with
/// `pad` white pixels on every side.
pub fn synth_line_image(
    text: &str,
    fonts: &[GlyphSet],
    size: Span,
    pad: usize,
    rng: &mut impl Rng,
) -> Result<Raster, SynthError> {
    let usable: Vec<&GlyphSet> = fonts.iter().filter(|f| f.supports_all(text)).collect();
    if usable.is_empty() {
        let c = text
            .chars()
            .find(|c| !fonts.iter().any(|f| f.supports(*c)))
            .unwrap_or(' ');
        return Err(SynthError::UnsupportedCodepoint(c));
    }
    let font = usable[rng.gen_range(0..usable.len())];
    let s = rng.gen_range(size.min..=size.max);
    let line = render_line(text, font, s)?;
    let mut out = Raster::new(line.height() + 2 * pad, line.width() + 2 * pad, WHITE);
    out.draw_min(&line, pad, pad);
    Ok(out)
}
