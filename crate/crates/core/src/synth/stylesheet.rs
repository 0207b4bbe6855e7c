//! Style sheets: the layout rules synthetic documents follow.
//!
//! ```text
//! [sheet]
//! name = letters
//! grammar = rimes2009
//! shape = 1600x1200        ; template height x width, pixels
//! l_max = 40
//! font_size = 14..20       ; ranges are inclusive, drawn uniformly
//! line_gap = 0..4
//! indent = 0..8
//! entity_gap = 4..12
//! margin = 16
//! crop_stride = 32
//!
//! [entity B]
//! columns = 0.05..0.95     ; horizontal anchor region, fractions of width
//! offset = 0..20           ; horizontal jitter from the region start
//! lines = 1..30
//! weight = 2               ; relative odds of being drawn next
//! max_chars = 60
//! band = new               ; new: below everything; same: beside the band
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::SynthError;
use crate::markup::{ClassId, LayoutGrammar};

/// Inclusive integer range.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub min: usize,
    pub max: usize,
}

impl Span {
    pub fn new(min: usize, max: usize) -> Self {
        Span { min, max }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.min, self.max)
    }
}

impl FromStr for Span {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once("..").unwrap_or((s, s));
        let min = a.trim().parse().map_err(|_| format!("bad range `{s}`"))?;
        let max = b.trim().parse().map_err(|_| format!("bad range `{s}`"))?;
        if max < min {
            return Err(format!("range `{s}` is empty"));
        }
        Ok(Span { min, max })
    }
}

/// Vertical placement rule of an entity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Band {
    /// Start a new band below every placed entity.
    New,
    /// Sit at the top of the current band, below any entity already
    /// occupying the same columns.
    Same,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntitySpec {
    pub class: ClassId,
    pub columns: (f64, f64),
    pub offset: Span,
    pub lines: Span,
    pub weight: f64,
    pub max_chars: usize,
    pub band: Band,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StyleSheet {
    pub name: String,
    pub grammar: String,
    /// `(height, width)` used when no template image is given.
    pub shape: (usize, usize),
    pub l_max: usize,
    pub font_size: Span,
    pub line_gap: Span,
    pub indent: Span,
    pub entity_gap: Span,
    pub margin: usize,
    pub crop_stride: usize,
    pub entities: Vec<EntitySpec>,
}

const READ_SHEET: &str = include_str!("../../stylesheets/read2016.sheet");
const RIMES_SHEET: &str = include_str!("../../stylesheets/rimes2009.sheet");

impl StyleSheet {
    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "read2016" => READ_SHEET,
            "rimes2009" => RIMES_SHEET,
            _ => return None,
        };
        Some(Self::parse(text).expect("built-in style sheet parses"))
    }

    pub fn resolve(spec: &str) -> Result<Self, SynthError> {
        match Self::builtin(spec) {
            Some(s) => Ok(s),
            None => Self::from_file(spec),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| SynthError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    pub fn entity(&self, class: ClassId) -> Option<&EntitySpec> {
        self.entities.iter().find(|e| e.class == class)
    }

    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let err = |line: usize, message: String| SynthError::Stylesheet { line, message };
        let mut sheet = StyleSheet {
            name: String::new(),
            grammar: String::new(),
            shape: (0, 0),
            l_max: 0,
            font_size: Span::new(16, 16),
            line_gap: Span::new(0, 0),
            indent: Span::new(0, 0),
            entity_gap: Span::new(0, 0),
            margin: 0,
            crop_stride: 32,
            entities: Vec::new(),
        };
        let mut in_sheet = false;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split(';').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(head) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                if head == "sheet" {
                    in_sheet = true;
                } else if let Some(c) = head.strip_prefix("entity ") {
                    let class = ClassId::new(c.trim()).map_err(|e| err(n, e.to_string()))?;
                    if sheet.entity(class).is_some() {
                        return Err(err(n, format!("class {class} declared twice")));
                    }
                    in_sheet = false;
                    sheet.entities.push(EntitySpec {
                        class,
                        columns: (0.0, 1.0),
                        offset: Span::new(0, 0),
                        lines: Span::new(1, 1),
                        weight: 1.0,
                        max_chars: usize::MAX,
                        band: Band::New,
                    });
                } else {
                    return Err(err(n, format!("unknown section `{head}`")));
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(n, format!("expected `key = value`, got `{line}`")))?;
            let span = |v: &str| v.parse::<Span>().map_err(|e| err(n, e));
            let int = |v: &str| v.parse::<usize>().map_err(|_| err(n, format!("bad integer `{v}`")));
            if in_sheet {
                match key {
                    "name" => sheet.name = value.to_string(),
                    "grammar" => sheet.grammar = value.to_string(),
                    "shape" => {
                        let (h, w) = value
                            .split_once('x')
                            .ok_or_else(|| err(n, "shape is HEIGHTxWIDTH".into()))?;
                        sheet.shape = (int(h.trim())?, int(w.trim())?);
                    }
                    "l_max" => sheet.l_max = int(value)?,
                    "font_size" => sheet.font_size = span(value)?,
                    "line_gap" => sheet.line_gap = span(value)?,
                    "indent" => sheet.indent = span(value)?,
                    "entity_gap" => sheet.entity_gap = span(value)?,
                    "margin" => sheet.margin = int(value)?,
                    "crop_stride" => sheet.crop_stride = int(value)?,
                    _ => return Err(err(n, format!("unknown sheet key `{key}`"))),
                }
            } else {
                let e = sheet
                    .entities
                    .last_mut()
                    .ok_or_else(|| err(n, "key outside any section".into()))?;
                match key {
                    "columns" => {
                        let (a, b) = value
                            .split_once("..")
                            .ok_or_else(|| err(n, "columns is FROM..TO".into()))?;
                        let f = |s: &str| s.trim().parse::<f64>().map_err(|_| err(n, format!("bad fraction `{s}`")));
                        let (a, b) = (f(a)?, f(b)?);
                        if !(0.0 <= a && a < b && b <= 1.0) {
                            return Err(err(n, "columns must satisfy 0 <= from < to <= 1".into()));
                        }
                        e.columns = (a, b);
                    }
                    "offset" => e.offset = span(value)?,
                    "lines" => {
                        e.lines = span(value)?;
                        if e.lines.min == 0 {
                            return Err(err(n, "entities hold at least one line".into()));
                        }
                    }
                    "weight" => {
                        e.weight = value
                            .parse()
                            .ok()
                            .filter(|w: &f64| *w > 0.0 && w.is_finite())
                            .ok_or_else(|| err(n, "weight must be positive".into()))?
                    }
                    "max_chars" => e.max_chars = int(value)?.max(1),
                    "band" => {
                        e.band = match value {
                            "new" => Band::New,
                            "same" => Band::Same,
                            _ => return Err(err(n, "band is `new` or `same`".into())),
                        }
                    }
                    _ => return Err(err(n, format!("unknown entity key `{key}`"))),
                }
            }
        }
        if sheet.shape.0 == 0 || sheet.shape.1 == 0 {
            return Err(err(0, "missing shape".into()));
        }
        if sheet.l_max == 0 {
            return Err(err(0, "l_max must be positive".into()));
        }
        if sheet.font_size.min == 0 || sheet.crop_stride == 0 {
            return Err(err(0, "font_size and crop_stride must be positive".into()));
        }
        Ok(sheet)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "[sheet]\nname = {}\ngrammar = {}\nshape = {}x{}\nl_max = {}\nfont_size = {}\nline_gap = {}\n\
             indent = {}\nentity_gap = {}\nmargin = {}\ncrop_stride = {}\n",
            self.name,
            self.grammar,
            self.shape.0,
            self.shape.1,
            self.l_max,
            self.font_size,
            self.line_gap,
            self.indent,
            self.entity_gap,
            self.margin,
            self.crop_stride
        );
        for e in &self.entities {
            out.push_str(&format!(
                "\n[entity {}]\ncolumns = {}..{}\noffset = {}\nlines = {}\nweight = {}\n",
                e.class, e.columns.0, e.columns.1, e.offset, e.lines, e.weight
            ));
            if e.max_chars != usize::MAX {
                out.push_str(&format!("max_chars = {}\n", e.max_chars));
            }
            out.push_str(match e.band {
                Band::New => "band = new\n",
                Band::Same => "band = same\n",
            });
        }
        out
    }

    /// Tallest a single line can get, gaps included.
    pub fn line_pitch_max(&self) -> usize {
        self.font_size.max + self.line_gap.max + self.entity_gap.max
    }

    /// Checks the sheet against a grammar and a template height: classes
    /// exist and carry text, mandatory text classes are described, and
    /// `l_max` lines stacked at their tallest fit inside the margins.
    pub fn validate(&self, grammar: &LayoutGrammar, height: usize) -> Result<(), SynthError> {
        let bad = |message: String| SynthError::Stylesheet { line: 0, message };
        let has_children = |c: ClassId| grammar.classes().iter().any(|k| k.parent == Some(c));
        for e in &self.entities {
            if !grammar.contains_class(e.class) {
                return Err(bad(format!("class {} is not in grammar {}", e.class, grammar.name())));
            }
            if has_children(e.class) {
                return Err(bad(format!("class {} contains other entities and holds no text", e.class)));
            }
        }
        for c in grammar.classes() {
            if c.min > 0 && !has_children(c.id) && self.entity(c.id).is_none() {
                return Err(bad(format!("mandatory class {} has no entity rules", c.id)));
            }
        }
        if self.entities.is_empty() {
            return Err(bad("no entity rules".into()));
        }
        let needed = self.l_max * self.line_pitch_max() + 2 * self.margin;
        if needed > height {
            return Err(SynthError::PlacementInfeasible(format!(
                "{} lines need up to {needed} px, template is {height} px tall",
                self.l_max
            )));
        }
        Ok(())
    }
}
