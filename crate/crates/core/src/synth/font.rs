//! Bitmap glyph sets. The built-in sets derive from an embedded 8x8
//! public-domain font; more can be loaded from a plain text format:
//!
//! ```text
//! [font]
//! name = tiny
//! height = 3
//! [glyph U+0041]
//! .#.
//! ###
//! #.#
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use font8x8::legacy::{BASIC_LEGACY, LATIN_LEGACY};

use super::SynthError;
use crate::markup::Alphabet;
use crate::raster::{Raster, INK, WHITE};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Glyph {
    width: usize,
    /// Row-major, `height * width`.
    bits: Vec<bool>,
}

impl Glyph {
    pub fn width(&self) -> usize {
        self.width
    }

    fn ink(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    fn is_blank(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlyphSet {
    id: String,
    height: usize,
    glyphs: BTreeMap<char, Glyph>,
}

/// Glyphs the embedded font lacks but the built-in grammars need.
const EXTRA_GLYPHS: [(char, [&str; 8]); 5] = [
    (
        '\u{2019}',
        ["...##...", "...##...", "....#...", "...#....", "........", "........", "........", "........"],
    ),
    (
        '\u{20AC}',
        ["..####..", ".#....#.", "####....", ".#......", "####....", ".#....#.", "..####..", "........"],
    ),
    (
        '\u{017F}',
        ["...###..", "..##..#.", "..##....", "..##....", "..##....", "..##....", "..##....", "........"],
    ),
    (
        '\u{2014}',
        ["........", "........", "........", "########", "........", "........", "........", "........"],
    ),
    (
        '\u{204A}',
        ["........", "........", "#######.", ".....##.", "....##..", "...##...", "..##....", "........"],
    ),
];

/// Names accepted by [`GlyphSet::builtin`].
pub const BUILTIN_FONTS: [&str; 3] = ["mono8", "prop8", "bold8"];

fn embedded_cells() -> BTreeMap<char, Glyph> {
    let mut out = BTreeMap::new();
    let mut add = |c: char, rows: [u8; 8]| {
        // Bit 0 is the leftmost pixel.
        let bits = rows
            .iter()
            .flat_map(|r| (0..8).map(move |x| r & (1 << x) != 0))
            .collect();
        out.insert(c, Glyph { width: 8, bits });
    };
    for c in 0x20u32..0x7F {
        add(char::from_u32(c).unwrap(), BASIC_LEGACY[c as usize]);
    }
    for (i, rows) in LATIN_LEGACY.iter().enumerate() {
        add(char::from_u32(0xA0 + i as u32).unwrap(), *rows);
    }
    for (c, rows) in EXTRA_GLYPHS {
        let bits = rows.iter().flat_map(|r| r.chars().map(|p| p == '#')).collect();
        out.insert(c, Glyph { width: 8, bits });
    }
    out
}

fn trim(g: &Glyph, height: usize) -> Glyph {
    if g.is_blank() {
        return Glyph {
            width: 4,
            bits: vec![false; height * 4],
        };
    }
    let used: Vec<usize> = (0..g.width).filter(|&x| (0..height).any(|y| g.ink(y, x))).collect();
    let (first, last) = (used[0], *used.last().unwrap());
    // One blank column of spacing on the right.
    let width = last - first + 2;
    let mut bits = vec![false; height * width];
    for y in 0..height {
        for x in first..=last {
            bits[y * width + x - first] = g.ink(y, x);
        }
    }
    Glyph { width, bits }
}

fn embolden(g: &Glyph, height: usize) -> Glyph {
    let width = g.width + 1;
    let mut bits = vec![false; height * width];
    for y in 0..height {
        for x in 0..g.width {
            if g.ink(y, x) {
                bits[y * width + x] = true;
                bits[y * width + x + 1] = true;
            }
        }
    }
    Glyph { width, bits }
}

impl GlyphSet {
    /// Fixed 8x8 cells.
    pub fn mono8() -> Self {
        GlyphSet {
            id: "mono8".into(),
            height: 8,
            glyphs: embedded_cells(),
        }
    }

    /// Cells trimmed to their inked columns plus one column of spacing.
    pub fn prop8() -> Self {
        GlyphSet {
            id: "prop8".into(),
            height: 8,
            glyphs: embedded_cells().into_iter().map(|(c, g)| (c, trim(&g, 8))).collect(),
        }
    }

    /// Proportional glyphs thickened by one pixel horizontally.
    pub fn bold8() -> Self {
        GlyphSet {
            id: "bold8".into(),
            height: 8,
            glyphs: Self::prop8()
                .glyphs
                .into_iter()
                .map(|(c, g)| {
                    let b = if g.is_blank() { g } else { embolden(&g, 8) };
                    (c, b)
                })
                .collect(),
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "mono8" => Some(Self::mono8()),
            "prop8" => Some(Self::prop8()),
            "bold8" => Some(Self::bold8()),
            _ => None,
        }
    }

    pub fn builtin_set() -> Vec<GlyphSet> {
        BUILTIN_FONTS.iter().filter_map(|n| Self::builtin(n)).collect()
    }

    /// A built-in name or the path of a font file.
    pub fn resolve(spec: &str) -> Result<Self, SynthError> {
        match Self::builtin(spec) {
            Some(f) => Ok(f),
            None => Self::from_file(spec),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| SynthError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let err = |line: usize, message: String| SynthError::Font { line, message };
        let mut name = None;
        let mut height = None;
        let mut glyphs = BTreeMap::new();
        let mut current: Option<(char, usize, Vec<String>)> = None;
        let mut finish = |cur: Option<(char, usize, Vec<String>)>, height: Option<usize>| -> Result<(), SynthError> {
            let Some((c, line, rows)) = cur else { return Ok(()) };
            let h = height.ok_or_else(|| err(line, "height must come before glyphs".into()))?;
            if rows.len() != h {
                return Err(err(line, format!("glyph has {} rows, font height is {h}", rows.len())));
            }
            let width = rows[0].chars().count();
            if width == 0 || rows.iter().any(|r| r.chars().count() != width) {
                return Err(err(line, "glyph rows must share one non-zero width".into()));
            }
            let bits = rows.iter().flat_map(|r| r.chars().map(|p| p == '#')).collect();
            glyphs.insert(c, Glyph { width, bits });
            Ok(())
        };
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            if let Some(head) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                finish(current.take(), height)?;
                if head == "font" {
                    continue;
                }
                let code = head
                    .strip_prefix("glyph U+")
                    .and_then(|h| u32::from_str_radix(h, 16).ok())
                    .and_then(char::from_u32)
                    .ok_or_else(|| err(n, format!("bad section `{head}`")))?;
                current = Some((code, n, Vec::new()));
            } else if let Some((_, _, rows)) = current.as_mut() {
                if line.chars().any(|p| p != '#' && p != '.') {
                    return Err(err(n, "glyph rows use only `#` and `.`".into()));
                }
                rows.push(line.to_string());
            } else if let Some((k, v)) = line.split_once('=') {
                match k.trim() {
                    "name" => name = Some(v.trim().to_string()),
                    "height" => {
                        height = Some(
                            v.trim()
                                .parse()
                                .ok()
                                .filter(|h| *h > 0)
                                .ok_or_else(|| err(n, "height must be a positive integer".into()))?,
                        )
                    }
                    other => return Err(err(n, format!("unknown key `{other}`"))),
                }
            } else {
                return Err(err(n, format!("unexpected line `{line}`")));
            }
        }
        finish(current.take(), height)?;
        Ok(GlyphSet {
            id: name.ok_or_else(|| err(0, "missing name".into()))?,
            height: height.ok_or_else(|| err(0, "missing height".into()))?,
            glyphs,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("[font]\nname = {}\nheight = {}\n", self.id, self.height);
        for (c, g) in &self.glyphs {
            let _ = writeln!(out, "[glyph U+{:04X}]", *c as u32);
            for y in 0..self.height {
                let row: String = (0..g.width).map(|x| if g.ink(y, x) { '#' } else { '.' }).collect();
                out.push_str(&row);
                out.push('\n');
            }
        }
        out
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn base_height(&self) -> usize {
        self.height
    }

    pub fn supports(&self, c: char) -> bool {
        self.glyphs.contains_key(&c)
    }

    pub fn supports_all(&self, text: &str) -> bool {
        text.chars().all(|c| self.supports(c))
    }

    pub fn glyph(&self, c: char) -> Option<&Glyph> {
        self.glyphs.get(&c)
    }

    /// Alphabet characters without a glyph.
    pub fn missing(&self, alphabet: &Alphabet) -> Vec<char> {
        alphabet.iter().filter(|c| !self.supports(*c)).collect()
    }

    /// Width in pixels of one glyph drawn `size` pixels tall.
    pub fn glyph_width(&self, c: char, size: usize) -> Result<usize, SynthError> {
        let g = self.glyph(c).ok_or(SynthError::UnsupportedCodepoint(c))?;
        Ok(((g.width * size + self.height / 2) / self.height).max(1))
    }

    pub fn text_width(&self, text: &str, size: usize) -> Result<usize, SynthError> {
        text.chars().map(|c| self.glyph_width(c, size)).sum()
    }
}

/// Draws `text` left to right, `size` pixels tall, without kerning. Each
/// glyph is scaled on its own so widths add up exactly.
pub fn render_line(text: &str, font: &GlyphSet, size: usize) -> Result<Raster, SynthError> {
    if text.is_empty() {
        return Err(SynthError::EmptyText);
    }
    let width = font.text_width(text, size)?;
    let mut out = Raster::new(size, width, WHITE);
    let mut left = 0;
    for c in text.chars() {
        let g = font.glyph(c).ok_or(SynthError::UnsupportedCodepoint(c))?;
        let w = font.glyph_width(c, size)?;
        for y in 0..size {
            let sy = y * font.height / size;
            for x in 0..w {
                if g.ink(sy, x * g.width / w) {
                    out.set(y, left + x, INK);
                }
            }
        }
        left += w;
    }
    Ok(out)
}
