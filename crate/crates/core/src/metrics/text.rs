use unicode_general_category::{get_general_category, GeneralCategory};

use super::MetricError;
use crate::markup::{Token, TokenSequence};

/// Unit-cost insert/delete/substitute edit distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance numerator and ground-truth length denominator, kept apart
/// so corpus rates are ratios of sums.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditTotals {
    pub edits: usize,
    pub reference_len: usize,
}

impl EditTotals {
    pub fn rate(&self) -> Result<f64, MetricError> {
        if self.reference_len == 0 {
            return Err(MetricError::EmptyGroundTruthCorpus);
        }
        Ok(self.edits as f64 / self.reference_len as f64)
    }
}

impl std::ops::Add for EditTotals {
    type Output = EditTotals;
    fn add(self, rhs: EditTotals) -> EditTotals {
        EditTotals {
            edits: self.edits + rhs.edits,
            reference_len: self.reference_len + rhs.reference_len,
        }
    }
}

impl std::iter::Sum for EditTotals {
    fn sum<I: Iterator<Item = EditTotals>>(iter: I) -> Self {
        iter.fold(EditTotals::default(), |a, b| a + b)
    }
}

pub fn char_edits(gt: &TokenSequence, pred: &TokenSequence) -> EditTotals {
    EditTotals {
        edits: levenshtein(gt.tokens(), pred.tokens()),
        reference_len: gt.len(),
    }
}

pub fn word_edits(gt: &TokenSequence, pred: &TokenSequence) -> EditTotals {
    let g = words(&gt.text());
    let p = words(&pred.text());
    EditTotals {
        edits: levenshtein(&g, &p),
        reference_len: g.len(),
    }
}

/// Corpus character error rate over already-stripped sequences.
pub fn cer(pairs: &[(TokenSequence, TokenSequence)]) -> Result<f64, MetricError> {
    pairs.iter().map(|(g, p)| char_edits(g, p)).sum::<EditTotals>().rate()
}

/// Corpus word error rate; punctuation marks count as words.
pub fn wer(pairs: &[(TokenSequence, TokenSequence)]) -> Result<f64, MetricError> {
    pairs.iter().map(|(g, p)| word_edits(g, p)).sum::<EditTotals>().rate()
}

fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Splits text into words: maximal runs of non-space, non-punctuation
/// characters, and one word per punctuation mark. An apostrophe between two
/// letters stays inside its word (`aujourd'hui`).
pub fn words(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let elision = (c == '\'' || c == '\u{2019}')
            && i > 0
            && chars[i - 1].is_alphabetic()
            && chars.get(i + 1).is_some_and(|n| n.is_alphabetic());
        if c.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else if is_punctuation(c) && !elision {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(c.to_string());
        } else {
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Number of character tokens.
pub fn char_count(seq: &TokenSequence) -> usize {
    seq.iter().filter(|t| matches!(t, Token::Char(_))).count()
}
