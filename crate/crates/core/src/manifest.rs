//! Document lists: one `id TAB image-path TAB transcript` record per line,
//! with an optional fourth split column.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::markup::{parse_markup, serialize, LayoutGrammar, TokenSequence};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifestError {
    #[error("manifest line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("manifest line {line}: duplicate id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub id: String,
    /// Resolved against the manifest's directory when relative.
    pub image: PathBuf,
    /// Canonical markup of the transcript.
    pub transcript: String,
    pub split: Option<String>,
}

impl ManifestRecord {
    pub fn tokens(&self, grammar: &LayoutGrammar) -> Result<TokenSequence, crate::markup::MarkupError> {
        parse_markup(&self.transcript, grammar)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    /// Parses manifest text; relative image paths are joined to `base`.
    /// Empty lines are skipped.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ManifestError> {
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = raw.split('\t').collect();
            if !(3..=4).contains(&cols.len()) {
                return Err(ManifestError::Syntax {
                    line,
                    message: format!("expected 3 or 4 tab-separated columns, found {}", cols.len()),
                });
            }
            let id = cols[0].trim();
            if id.is_empty() {
                return Err(ManifestError::Syntax {
                    line,
                    message: "empty id".into(),
                });
            }
            if !seen.insert(id.to_string()) {
                return Err(ManifestError::DuplicateId { line, id: id.into() });
            }
            let path = Path::new(cols[1].trim());
            records.push(ManifestRecord {
                id: id.into(),
                image: if path.is_absolute() { path.into() } else { base.join(path) },
                transcript: cols[2].to_string(),
                split: cols.get(3).map(|s| s.trim().to_string()).filter(|s| !s.is_empty()),
            });
        }
        Ok(Manifest { records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ManifestError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    /// Text form with image paths as stored.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!("{}\t{}\t{}", r.id, r.image.display(), r.transcript));
            if let Some(s) = &r.split {
                out.push('\t');
                out.push_str(s);
            }
            out.push('\n');
        }
        out
    }

    pub fn push(&mut self, id: impl Into<String>, image: impl Into<PathBuf>, transcript: &TokenSequence) {
        self.records.push(ManifestRecord {
            id: id.into(),
            image: image.into(),
            transcript: serialize(transcript),
            split: None,
        });
    }

    pub fn get(&self, id: &str) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn split<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a ManifestRecord> + 'a {
        self.records.iter().filter(move |r| r.split.as_deref() == Some(tag))
    }
}
