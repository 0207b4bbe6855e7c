//! Synthetic printed lines and documents with curriculum control.

mod curriculum;
mod font;
mod generator;
mod lines;
mod stylesheet;

pub use curriculum::{curriculum_lines, synth_fraction, CurriculumState, SynthSchedule};
pub use font::{render_line, Glyph, GlyphSet, BUILTIN_FONTS};
pub use generator::{generate_document, EntityBox, SynthDocument, SynthGenerator};
pub use lines::{synth_line_image, LineDataset, LineRecord};
pub use stylesheet::{Band, EntitySpec, Span, StyleSheet};

use crate::markup::ClassId;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("cannot render an empty line")]
    EmptyText,
    #[error("no glyph for {0:?}")]
    UnsupportedCodepoint(char),
    #[error("placement infeasible: {0}")]
    PlacementInfeasible(String),
    #[error("no text lines for class {0}")]
    ExhaustedLines(ClassId),
    #[error("style sheet line {line}: {message}")]
    Stylesheet { line: usize, message: String },
    #[error("font line {line}: {message}")]
    Font { line: usize, message: String },
    #[error("line dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}
