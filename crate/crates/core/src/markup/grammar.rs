use std::collections::HashMap;
use std::fmt;
use std::ops::RangeInclusive;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ClassId, MarkupError};

const RIMES2009: &str = include_str!("../../grammars/rimes2009.grammar");
const READ2016: &str = include_str!("../../grammars/read2016.grammar");

/// Names of the grammars compiled into the library.
pub const BUILTIN_GRAMMARS: &[&str] = &["rimes2009", "read2016"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayoutClass {
    pub id: ClassId,
    pub name: String,
    /// `None` means the entity sits directly under the document root.
    pub parent: Option<ClassId>,
    pub min: u32,
    /// `None` is unbounded.
    pub max: Option<u32>,
}

impl LayoutClass {
    pub fn may_repeat(&self) -> bool {
        self.max.is_none_or(|m| m > 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReadingOrder {
    /// Regions read top to bottom, left to right on shared rows.
    TopBottomLeftRight,
    /// Siblings follow the declared class order inside their parent.
    Hierarchical,
}

impl ReadingOrder {
    pub fn id(&self) -> &'static str {
        match self {
            ReadingOrder::TopBottomLeftRight => "top-bottom-left-right",
            ReadingOrder::Hierarchical => "read-hierarchical",
        }
    }
}

impl FromStr for ReadingOrder {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "top-bottom-left-right" => Ok(ReadingOrder::TopBottomLeftRight),
            "read-hierarchical" => Ok(ReadingOrder::Hierarchical),
            other => Err(format!("unknown reading-order rule `{other}`")),
        }
    }
}

/// Set of codepoints allowed as character tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    ranges: Vec<RangeInclusive<char>>,
}

impl Alphabet {
    pub fn new(ranges: Vec<RangeInclusive<char>>) -> Result<Self, MarkupError> {
        for r in &ranges {
            if r.contains(&'<') || r.contains(&'>') {
                return Err(MarkupError::Grammar {
                    line: 0,
                    message: "angle brackets are reserved for layout tags".into(),
                });
            }
        }
        Ok(Alphabet { ranges })
    }

    pub fn contains(&self, c: char) -> bool {
        self.ranges.iter().any(|r| r.contains(&c))
    }

    pub fn ranges(&self) -> &[RangeInclusive<char>] {
        &self.ranges
    }

    pub fn iter(&self) -> impl Iterator<Item = char> + '_ {
        self.ranges.iter().flat_map(|r| r.clone())
    }
}

/// Layout classes, their hierarchy, the character alphabet and the reading
/// order rule of one dataset.
#[derive(Clone, Debug)]
pub struct LayoutGrammar {
    name: String,
    alphabet: Alphabet,
    classes: Vec<LayoutClass>,
    order: ReadingOrder,
    page: Option<ClassId>,
    index: HashMap<ClassId, usize>,
}

impl LayoutGrammar {
    pub fn new(
        name: impl Into<String>,
        alphabet: Alphabet,
        classes: Vec<LayoutClass>,
        order: ReadingOrder,
        page: Option<ClassId>,
    ) -> Result<Self, MarkupError> {
        let invalid = |message: String| MarkupError::Grammar { line: 0, message };
        let mut index = HashMap::new();
        for (i, c) in classes.iter().enumerate() {
            if index.insert(c.id, i).is_some() {
                return Err(invalid(format!("class `{}` declared twice", c.id)));
            }
            if let Some(max) = c.max {
                if max < c.min {
                    return Err(invalid(format!("class `{}` has max < min", c.id)));
                }
            }
        }
        for c in &classes {
            if let Some(p) = c.parent {
                if !index.contains_key(&p) {
                    return Err(invalid(format!("class `{}` has unknown parent `{p}`", c.id)));
                }
            }
        }
        let grammar = LayoutGrammar {
            name: name.into(),
            alphabet,
            classes,
            order,
            page,
            index,
        };
        // Parent links must reach the root.
        for c in &grammar.classes {
            let mut cur = c.parent;
            let mut steps = 0;
            while let Some(p) = cur {
                steps += 1;
                if steps > grammar.classes.len() {
                    return Err(invalid(format!("class `{}` sits on a parent cycle", c.id)));
                }
                cur = grammar.parent_of(p);
            }
        }
        if let Some(p) = page {
            match grammar.class(p) {
                None => return Err(invalid(format!("page class `{p}` is not declared"))),
                Some(c) if c.parent.is_some() => {
                    return Err(invalid(format!("page class `{p}` must be top-level")))
                }
                _ => {}
            }
        }
        Ok(grammar)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "rimes2009" => RIMES2009,
            "read2016" => READ2016,
            _ => return None,
        };
        Some(Self::parse(text).expect("embedded grammar is valid"))
    }

    pub fn rimes2009() -> Self {
        Self::builtin("rimes2009").unwrap()
    }

    pub fn read2016() -> Self {
        Self::builtin("read2016").unwrap()
    }

    /// Built-in grammar id, or otherwise a path to a grammar file.
    pub fn resolve(spec: &str) -> Result<Self, MarkupError> {
        match Self::builtin(spec) {
            Some(g) => Ok(g),
            None => Self::from_file(spec),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, MarkupError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| MarkupError::Grammar {
            line: 0,
            message: format!("{}: {e}", path.as_ref().display()),
        })?;
        Self::parse(&text)
    }

    /// Parses the sectioned grammar text format (`[grammar]`, `[classes]`,
    /// `[alphabet]`, `[order]`).
    pub fn parse(text: &str) -> Result<Self, MarkupError> {
        let mut section = String::new();
        let mut name = None;
        let mut page = None;
        let mut classes = Vec::new();
        let mut ranges = Vec::new();
        let mut order = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let err = |message: String| MarkupError::Grammar {
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                section = rest.trim_end_matches(']').trim().to_string();
                continue;
            }
            match section.as_str() {
                "grammar" => {
                    let (key, value) = line
                        .split_once('=')
                        .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
                    match key.trim() {
                        "name" => name = Some(value.trim().to_string()),
                        "page" => page = Some(ClassId::new(value.trim())?),
                        other => return Err(err(format!("unknown key `{other}`"))),
                    }
                }
                "classes" => {
                    let fields: Vec<&str> = line.split_whitespace().collect();
                    if fields.len() < 4 {
                        return Err(err("class rows need `id parent min max [name]`".into()));
                    }
                    let id = ClassId::new(fields[0])?;
                    let parent = match fields[1] {
                        "-" => None,
                        p => Some(ClassId::new(p)?),
                    };
                    let min = fields[2]
                        .parse()
                        .map_err(|_| err(format!("bad min `{}`", fields[2])))?;
                    let max = match fields[3] {
                        "*" => None,
                        m => Some(m.parse().map_err(|_| err(format!("bad max `{m}`")))?),
                    };
                    let display = if fields.len() > 4 {
                        fields[4..].join(" ")
                    } else {
                        id.to_string()
                    };
                    classes.push(LayoutClass {
                        id,
                        name: display,
                        parent,
                        min,
                        max,
                    });
                }
                "alphabet" => {
                    let (lo, hi) = match line.split_once("..") {
                        Some((a, b)) => (a.trim(), b.trim()),
                        None => (line, line),
                    };
                    let lo = parse_codepoint(lo).ok_or_else(|| err(format!("bad codepoint `{lo}`")))?;
                    let hi = parse_codepoint(hi).ok_or_else(|| err(format!("bad codepoint `{hi}`")))?;
                    if hi < lo {
                        return Err(err("empty codepoint range".into()));
                    }
                    ranges.push(lo..=hi);
                }
                "order" => {
                    order = Some(line.parse::<ReadingOrder>().map_err(err)?);
                }
                other => {
                    return Err(err(format!("line outside a known section (`[{other}]`)")));
                }
            }
        }

        let name = name.unwrap_or_else(|| "unnamed".to_string());
        let order = order.ok_or(MarkupError::Grammar {
            line: 0,
            message: "missing [order] section".into(),
        })?;
        if ranges.is_empty() {
            return Err(MarkupError::Grammar {
                line: 0,
                message: "missing [alphabet] section".into(),
            });
        }
        LayoutGrammar::new(name, Alphabet::new(ranges)?, classes, order, page)
    }

    /// Canonical text form, parseable by [`LayoutGrammar::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("[grammar]\n");
        out.push_str(&format!("name = {}\n", self.name));
        if let Some(p) = self.page {
            out.push_str(&format!("page = {p}\n"));
        }
        out.push_str("\n[classes]\n");
        for c in &self.classes {
            let parent = c.parent.map_or("-".to_string(), |p| p.to_string());
            let max = c.max.map_or("*".to_string(), |m| m.to_string());
            out.push_str(&format!("{} {} {} {} {}\n", c.id, parent, c.min, max, c.name));
        }
        out.push_str("\n[alphabet]\n");
        for r in &self.alphabet.ranges {
            out.push_str(&format!("U+{:04X}..U+{:04X}\n", *r.start() as u32, *r.end() as u32));
        }
        out.push_str(&format!("\n[order]\n{}\n", self.order.id()));
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn classes(&self) -> &[LayoutClass] {
        &self.classes
    }

    pub fn class_ids(&self) -> Vec<ClassId> {
        self.classes.iter().map(|c| c.id).collect()
    }

    pub fn order(&self) -> ReadingOrder {
        self.order
    }

    pub fn page_class(&self) -> Option<ClassId> {
        self.page
    }

    pub fn class(&self, id: ClassId) -> Option<&LayoutClass> {
        self.index.get(&id).map(|&i| &self.classes[i])
    }

    pub fn contains_class(&self, id: ClassId) -> bool {
        self.index.contains_key(&id)
    }

    /// Position of the class in declaration order.
    pub fn declared_index(&self, id: ClassId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn parent_of(&self, id: ClassId) -> Option<ClassId> {
        self.class(id).and_then(|c| c.parent)
    }

    /// Ancestors of `id`, nearest first, excluding the document root.
    pub fn ancestors(&self, id: ClassId) -> Vec<ClassId> {
        let mut out = Vec::new();
        let mut cur = self.parent_of(id);
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent_of(p);
        }
        out
    }

    /// True when `ancestor` lies strictly above `id` in the class hierarchy.
    pub fn is_ancestor(&self, ancestor: ClassId, id: ClassId) -> bool {
        self.ancestors(id).contains(&ancestor)
    }

    /// Two tokens (begin, end) per class.
    pub fn layout_token_count(&self) -> usize {
        2 * self.classes.len()
    }
}

impl fmt::Display for LayoutGrammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn parse_codepoint(s: &str) -> Option<char> {
    let hex = s.strip_prefix("U+").or_else(|| s.strip_prefix("u+"))?;
    char::from_u32(u32::from_str_radix(hex, 16).ok()?)
}
