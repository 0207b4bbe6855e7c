//! Rule-based synthetic documents.
//!
//! Entities are added one after the other until the requested number of
//! lines is reached. Each one gets a class allowed by the grammar at that
//! point, a line count that keeps the rest of the page completable, lines
//! drawn from the line dataset in random fonts and sizes, and a position
//! from the style sheet. Container classes (such as sections) are opened
//! and closed around the entities as the grammar requires.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::font::{render_line, GlyphSet};
use super::lines::LineDataset;
use super::stylesheet::{Band, StyleSheet};
use super::SynthError;
use crate::markup::{ClassId, LayoutGrammar, ReadingOrder, Token, TokenSequence};
use crate::raster::{Raster, WHITE};

/// Where an entity was drawn. Generation bookkeeping, not a label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityBox {
    pub class: ClassId,
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
    pub lines: usize,
}

impl EntityBox {
    pub fn bottom(&self) -> usize {
        self.top + self.height
    }

    pub fn right(&self) -> usize {
        self.left + self.width
    }

    pub fn overlaps(&self, other: &EntityBox) -> bool {
        self.left < other.right() && other.left < self.right() && self.top < other.bottom() && other.top < self.bottom()
    }
}

#[derive(Clone, Debug)]
pub struct SynthDocument {
    pub image: Raster,
    pub ground_truth: TokenSequence,
    boxes: Vec<EntityBox>,
}

impl SynthDocument {
    pub fn boxes(&self) -> &[EntityBox] {
        &self.boxes
    }

    pub fn line_count(&self) -> usize {
        self.boxes.iter().map(|b| b.lines).sum()
    }
}

/// An open container: the document root or a class with children.
#[derive(Clone, Debug)]
struct Frame {
    class: Option<ClassId>,
    counts: BTreeMap<ClassId, usize>,
    /// Declared index of the last child added.
    last: Option<usize>,
}

impl Frame {
    fn new(class: Option<ClassId>) -> Self {
        Frame {
            class,
            counts: BTreeMap::new(),
            last: None,
        }
    }

    fn count(&self, c: ClassId) -> usize {
        self.counts.get(&c).copied().unwrap_or(0)
    }
}

/// Which containers to close and open before adding an entity.
#[derive(Clone, Debug)]
struct Plan {
    close: usize,
    open: Vec<ClassId>,
}

#[derive(Clone)]
struct Structure<'a> {
    grammar: &'a LayoutGrammar,
    sheet: &'a StyleSheet,
    lines: &'a LineDataset,
    stack: Vec<Frame>,
    page_opened: bool,
}

fn add(a: Option<usize>, b: Option<usize>) -> Option<usize> {
    Some(a?.saturating_add(b?))
}

impl<'a> Structure<'a> {
    fn new(grammar: &'a LayoutGrammar, sheet: &'a StyleSheet, lines: &'a LineDataset) -> Self {
        Structure {
            grammar,
            sheet,
            lines,
            stack: vec![Frame::new(None)],
            page_opened: false,
        }
    }

    fn children(&self, parent: Option<ClassId>) -> impl Iterator<Item = ClassId> + '_ {
        self.grammar.classes().iter().filter(move |c| c.parent == parent).map(|c| c.id)
    }

    fn is_leaf(&self, c: ClassId) -> bool {
        self.children(Some(c)).next().is_none()
    }

    fn min(&self, c: ClassId) -> usize {
        self.grammar.class(c).map_or(0, |k| k.min as usize)
    }

    fn max(&self, c: ClassId) -> Option<usize> {
        self.grammar.class(c).and_then(|k| k.max.map(|m| m as usize))
    }

    fn index(&self, c: ClassId) -> usize {
        self.grammar.declared_index(c).unwrap_or(0)
    }

    fn is_page(&self, c: ClassId) -> bool {
        self.grammar.page_class() == Some(c)
    }

    fn usable(&self, c: ClassId) -> bool {
        self.sheet.entity(c).is_some() && self.lines.has_class(c)
    }

    fn can_close(&self, f: &Frame) -> bool {
        self.children(f.class).all(|ch| f.count(ch) >= self.min(ch))
    }

    fn can_append(&self, f: &Frame, child: ClassId) -> bool {
        if self.max(child).is_some_and(|m| f.count(child) >= m) {
            return false;
        }
        if self.is_page(child) && self.page_opened {
            return false;
        }
        let idx = self.index(child);
        if self.grammar.order() == ReadingOrder::Hierarchical && f.last.is_some_and(|l| l > idx) {
            return false;
        }
        // Mandatory classes come first, in declared order.
        !self
            .children(f.class)
            .any(|s| self.index(s) < idx && f.count(s) < self.min(s))
    }

    fn plan(&self, c: ClassId) -> Option<Plan> {
        let mut path = self.grammar.ancestors(c);
        path.reverse();
        // Deepest open frame agreeing with the ancestor chain.
        let mut depth = 0;
        while depth < path.len() && depth + 1 < self.stack.len() && self.stack[depth + 1].class == Some(path[depth]) {
            depth += 1;
        }
        'levels: for k in (0..=depth).rev() {
            for f in &self.stack[k + 1..] {
                if !self.can_close(f) {
                    continue 'levels;
                }
            }
            let mut frame = self.stack[k].clone();
            for &next in path[k..].iter().chain(std::iter::once(&c)) {
                if !self.can_append(&frame, next) {
                    continue 'levels;
                }
                frame = Frame::new(Some(next));
            }
            return Some(Plan {
                close: self.stack.len() - 1 - k,
                open: path[k..].to_vec(),
            });
        }
        None
    }

    fn bump(&mut self, c: ClassId) {
        let idx = self.index(c);
        let top = self.stack.last_mut().unwrap();
        *top.counts.entry(c).or_insert(0) += 1;
        top.last = Some(idx);
        if self.is_page(c) {
            self.page_opened = true;
        }
    }

    /// Applies a plan and adds `c`, returning the container tokens to emit
    /// before the entity.
    fn apply(&mut self, plan: &Plan, c: ClassId) -> Vec<Token> {
        let mut tokens = Vec::new();
        for _ in 0..plan.close {
            let f = self.stack.pop().unwrap();
            tokens.push(Token::End(f.class.unwrap()));
        }
        for &o in &plan.open {
            self.bump(o);
            self.stack.push(Frame::new(Some(o)));
            tokens.push(Token::Begin(o));
        }
        self.bump(c);
        tokens
    }

    fn close_all(&mut self) -> Vec<Token> {
        let mut tokens = Vec::new();
        while self.stack.len() > 1 {
            tokens.push(Token::End(self.stack.pop().unwrap().class.unwrap()));
        }
        tokens
    }

    /// Fewest lines a fresh entity of class `c` needs, `None` if it cannot
    /// be filled at all.
    fn need_new(&self, c: ClassId) -> Option<usize> {
        if self.is_leaf(c) {
            return if self.usable(c) {
                self.sheet.entity(c).map(|e| e.lines.min)
            } else {
                None
            };
        }
        self.children(Some(c))
            .map(|ch| {
                let m = self.min(ch);
                if m == 0 {
                    Some(0)
                } else {
                    self.need_new(ch).map(|n| n * m)
                }
            })
            .sum()
    }

    /// Lines still owed to mandatory classes of the open containers.
    fn need(&self) -> Option<usize> {
        let mut total = 0;
        for f in &self.stack {
            for ch in self.children(f.class) {
                let missing = self.min(ch).saturating_sub(f.count(ch));
                if missing > 0 {
                    total += self.need_new(ch)? * missing;
                }
            }
        }
        Some(total)
    }

    /// Most lines a fresh entity of class `c` can hold, `None` if unbounded.
    fn capacity_new(&self, c: ClassId) -> Option<usize> {
        if self.is_leaf(c) {
            return Some(if self.usable(c) {
                self.sheet.entity(c).map_or(0, |e| e.lines.max)
            } else {
                0
            });
        }
        let mut total = Some(0);
        for ch in self.children(Some(c)) {
            let per = self.capacity_new(ch);
            total = add(total, times(self.max(ch), per));
        }
        total
    }

    /// Upper bound on the lines the page can still take.
    fn capacity(&self) -> Option<usize> {
        let mut total = Some(0);
        for f in &self.stack {
            for ch in self.children(f.class) {
                let blocked = (self.is_page(ch) && self.page_opened)
                    || (self.grammar.order() == ReadingOrder::Hierarchical && f.last.is_some_and(|l| l > self.index(ch)));
                if blocked {
                    continue;
                }
                let left = self.max(ch).map(|m| m.saturating_sub(f.count(ch)));
                total = add(total, times(left, self.capacity_new(ch)));
            }
        }
        total
    }
}

/// `count * per` where `None` means unbounded; zero wins.
fn times(count: Option<usize>, per: Option<usize>) -> Option<usize> {
    match (count, per) {
        (Some(0), _) | (_, Some(0)) => Some(0),
        (Some(a), Some(b)) => Some(a.saturating_mul(b)),
        _ => None,
    }
}

struct Candidate {
    class: ClassId,
    plan: Plan,
    lines: (usize, usize),
}

fn candidates(st: &Structure<'_>, remaining: usize) -> Vec<Candidate> {
    let mut out = Vec::new();
    for spec in &st.sheet.entities {
        let c = spec.class;
        if !st.usable(c) || !st.is_leaf(c) {
            continue;
        }
        let Some(plan) = st.plan(c) else { continue };
        let mut after = st.clone();
        after.apply(&plan, c);
        let Some(need) = after.need() else { continue };
        if need > remaining {
            continue;
        }
        let lo = match after.capacity() {
            Some(cap) => spec.lines.min.max(remaining.saturating_sub(cap)),
            None => spec.lines.min,
        };
        let hi = spec.lines.max.min(remaining - need);
        if lo <= hi {
            out.push(Candidate {
                class: c,
                plan,
                lines: (lo, hi),
            });
        }
    }
    out
}

struct Placed {
    image: Raster,
    text: String,
}

/// Renders `n` lines of class `c` into one entity image no wider than
/// `max_width`.
#[allow(clippy::too_many_arguments)]
fn render_entity(
    c: ClassId,
    n: usize,
    max_width: usize,
    indent: usize,
    line_gap: usize,
    sheet: &StyleSheet,
    lines: &LineDataset,
    fonts: &[GlyphSet],
    rng: &mut impl Rng,
) -> Result<Placed, SynthError> {
    let spec = sheet.entity(c).expect("usable classes have rules");
    let mut rendered = Vec::with_capacity(n);
    let mut texts = Vec::with_capacity(n);
    for _ in 0..n {
        let text = lines.random_text(c, rng)?;
        let usable: Vec<&GlyphSet> = fonts.iter().filter(|f| f.supports_all(text)).collect();
        if usable.is_empty() {
            let ch = text.chars().find(|ch| !fonts.iter().any(|f| f.supports(*ch))).unwrap_or(' ');
            return Err(SynthError::UnsupportedCodepoint(ch));
        }
        let font = usable[rng.gen_range(0..usable.len())];
        let size = rng.gen_range(sheet.font_size.min..=sheet.font_size.max);
        // Keep the longest prefix that fits both limits.
        let mut width = 0;
        let mut kept = String::new();
        for ch in text.chars().take(spec.max_chars) {
            let w = font.glyph_width(ch, size)?;
            if width + w > max_width.saturating_sub(indent) {
                break;
            }
            width += w;
            kept.push(ch);
        }
        let kept = kept.trim_end().to_string();
        if kept.is_empty() {
            return Err(SynthError::PlacementInfeasible(format!(
                "class {c}: no character fits in {max_width} px"
            )));
        }
        rendered.push(render_line(&kept, font, size)?);
        texts.push(kept);
    }
    let height = rendered.iter().map(Raster::height).sum::<usize>() + line_gap * (n - 1);
    let width = indent + rendered.iter().map(Raster::width).max().unwrap_or(0);
    let mut image = Raster::new(height, width, WHITE);
    let mut y = 0;
    for r in &rendered {
        image.draw_min(r, y, indent);
        y += r.height() + line_gap;
    }
    Ok(Placed {
        image,
        text: texts.join(" "),
    })
}

/// Builds one synthetic document of exactly `l_doc` lines on a white
/// `(height, width)` page. With `crop`, the page is cut below the lowest
/// entity, rounded up to a multiple of the sheet's crop stride.
#[allow(clippy::too_many_arguments)]
pub fn generate_document(
    shape: (usize, usize),
    l_doc: usize,
    sheet: &StyleSheet,
    grammar: &LayoutGrammar,
    lines: &LineDataset,
    fonts: &[GlyphSet],
    rng: &mut impl Rng,
    crop: bool,
) -> Result<SynthDocument, SynthError> {
    let (height, width) = shape;
    if l_doc == 0 {
        return Err(SynthError::PlacementInfeasible("a document needs at least one line".into()));
    }
    if l_doc > sheet.l_max {
        return Err(SynthError::PlacementInfeasible(format!(
            "{l_doc} lines requested, the style sheet allows {}",
            sheet.l_max
        )));
    }
    sheet.validate(grammar, height)?;
    for c in grammar.classes() {
        if c.min > 0 && sheet.entity(c.id).is_some() && !lines.has_class(c.id) {
            return Err(SynthError::ExhaustedLines(c.id));
        }
    }

    let mut page = Raster::new(height, width, WHITE);
    let mut tokens: Vec<Token> = Vec::new();
    let mut boxes: Vec<EntityBox> = Vec::new();
    let mut st = Structure::new(grammar, sheet, lines);
    let mut band_top = sheet.margin;
    let mut current = 0;
    while current < l_doc {
        let remaining = l_doc - current;
        let cands = candidates(&st, remaining);
        if cands.is_empty() {
            return Err(SynthError::PlacementInfeasible(format!(
                "no layout class can take the remaining {remaining} lines"
            )));
        }
        let weights: Vec<f64> = cands.iter().map(|k| sheet.entity(k.class).unwrap().weight).collect();
        let pick = &cands[WeightedIndex::new(&weights).expect("positive weights").sample(rng)];
        let c = pick.class;
        let spec = sheet.entity(c).unwrap();
        let n = rng.gen_range(pick.lines.0..=pick.lines.1);

        let indent = rng.gen_range(sheet.indent.min..=sheet.indent.max);
        let line_gap = rng.gen_range(sheet.line_gap.min..=sheet.line_gap.max);
        let gap = rng.gen_range(sheet.entity_gap.min..=sheet.entity_gap.max);
        let region_left = (spec.columns.0 * width as f64).round() as usize;
        let region_right = ((spec.columns.1 * width as f64).floor() as usize).min(width);
        let left = (region_left + rng.gen_range(spec.offset.min..=spec.offset.max)).min(region_right.saturating_sub(1));
        let placed = render_entity(c, n, region_right - left, indent, line_gap, sheet, lines, fonts, rng)?;

        let opens_container = !pick.plan.open.is_empty() || pick.plan.close > 0;
        let lowest = boxes.iter().map(EntityBox::bottom).max();
        let below_all = lowest.map_or(sheet.margin, |b| b + gap);
        let (w, h) = (placed.image.width(), placed.image.height());
        let mut top = match (spec.band, boxes.is_empty() || opens_container) {
            (Band::Same, false) => boxes
                .iter()
                .filter(|b| b.left < left + w && left < b.right())
                .map(|b| b.bottom() + gap)
                .fold(band_top, usize::max),
            _ => below_all,
        };
        if grammar.order() == ReadingOrder::TopBottomLeftRight {
            if let Some(prev) = boxes.last() {
                if (top, left) <= (prev.top, prev.left) {
                    top = below_all;
                }
            }
        }
        if top == below_all {
            band_top = top;
        }
        if top + h + sheet.margin > height {
            return Err(SynthError::PlacementInfeasible(format!(
                "class {c} does not fit below y={top} on a {height} px page"
            )));
        }
        page.draw_min(&placed.image, top, left);
        boxes.push(EntityBox {
            class: c,
            top,
            left,
            height: h,
            width: w,
            lines: n,
        });

        tokens.extend(st.apply(&pick.plan, c));
        tokens.push(Token::Begin(c));
        tokens.extend(placed.text.chars().map(Token::Char));
        tokens.push(Token::End(c));
        current += n;
    }
    tokens.extend(st.close_all());

    let image = if crop {
        let bottom = boxes.iter().map(EntityBox::bottom).max().unwrap_or(0);
        let stride = sheet.crop_stride;
        page.with_height(bottom.div_ceil(stride) * stride)
    } else {
        page
    };
    Ok(SynthDocument {
        image,
        ground_truth: TokenSequence::new(tokens).expect("no sentinels"),
        boxes,
    })
}

/// Seeded source of synthetic documents over fixed inputs.
pub struct SynthGenerator {
    sheet: StyleSheet,
    grammar: LayoutGrammar,
    lines: LineDataset,
    fonts: Vec<GlyphSet>,
    shapes: Vec<(usize, usize)>,
    rng: ChaCha8Rng,
}

impl SynthGenerator {
    /// `shapes` are template page sizes, one drawn per document; an empty
    /// list means the sheet's own shape.
    pub fn new(
        sheet: StyleSheet,
        grammar: LayoutGrammar,
        lines: LineDataset,
        fonts: Vec<GlyphSet>,
        shapes: Vec<(usize, usize)>,
        seed: u64,
    ) -> Result<Self, SynthError> {
        let shapes = if shapes.is_empty() { vec![sheet.shape] } else { shapes };
        for s in &shapes {
            sheet.validate(&grammar, s.0)?;
        }
        if fonts.is_empty() {
            return Err(SynthError::Font {
                line: 0,
                message: "no fonts".into(),
            });
        }
        Ok(SynthGenerator {
            sheet,
            grammar,
            lines,
            fonts,
            shapes,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn sheet(&self) -> &StyleSheet {
        &self.sheet
    }

    /// A document with between 1 and `l` lines.
    pub fn next(&mut self, l: usize, crop: bool) -> Result<SynthDocument, SynthError> {
        let shape = self.shapes[self.rng.gen_range(0..self.shapes.len())];
        let l_doc = self.rng.gen_range(1..=l.clamp(1, self.sheet.l_max));
        generate_document(
            shape,
            l_doc,
            &self.sheet,
            &self.grammar,
            &self.lines,
            &self.fonts,
            &mut self.rng,
            crop,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markup::{serialize, validate};

    fn read_lines() -> LineDataset {
        LineDataset::parse_tsv(
            "N\t12\nN\t7\nA\tNota bene\nA\tItem\nB\tDer Rat beschloss heute\nB\tund so weiter fort\n",
            &LayoutGrammar::read2016(),
        )
        .unwrap()
    }

    fn rimes_lines() -> LineDataset {
        let g = LayoutGrammar::rimes2009();
        let text: String = ["S", "R", "W", "Y", "O", "B", "P"]
            .iter()
            .map(|c| format!("{c}\tligne de la classe {c}\n{c}\tautre ligne {c}\n"))
            .collect();
        LineDataset::parse_tsv(&text, &g).unwrap()
    }

    #[test]
    fn single_line_flat_document() {
        let g = LayoutGrammar::rimes2009();
        let s = StyleSheet::builtin("rimes2009").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = generate_document(s.shape, 1, &s, &g, &rimes_lines(), &GlyphSet::builtin_set(), &mut rng, true).unwrap();
        assert_eq!(d.boxes().len(), 1);
        let t = d.ground_truth.tokens();
        assert!(matches!(t[0], Token::Begin(_)));
        assert!(matches!(t[t.len() - 1], Token::End(_)));
        assert_eq!(d.ground_truth.layout_token_count(), 2);
    }

    #[test]
    fn read_documents_are_valid_and_exact() {
        let g = LayoutGrammar::read2016();
        let s = StyleSheet::builtin("read2016").unwrap();
        let lines = read_lines();
        let fonts = GlyphSet::builtin_set();
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = 1 + (seed as usize % s.l_max);
            let d = generate_document(s.shape, l, &s, &g, &lines, &fonts, &mut rng, true).unwrap();
            assert!(validate(&d.ground_truth, &g).is_empty(), "{}", serialize(&d.ground_truth));
            assert_eq!(d.line_count(), l);
            assert_eq!(d.image.height() % s.crop_stride, 0);
        }
    }

    #[test]
    fn no_crop_keeps_template_height() {
        let g = LayoutGrammar::read2016();
        let s = StyleSheet::builtin("read2016").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = generate_document(s.shape, s.l_max, &s, &g, &read_lines(), &GlyphSet::builtin_set(), &mut rng, false)
            .unwrap();
        assert_eq!((d.image.height(), d.image.width()), s.shape);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let g = LayoutGrammar::read2016();
        let s = StyleSheet::builtin("read2016").unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            generate_document(s.shape, 5, &s, &g, &read_lines(), &GlyphSet::builtin_set(), &mut rng, true).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.image, b.image);
        assert_eq!(a.ground_truth, b.ground_truth);
    }

    #[test]
    fn missing_mandatory_lines() {
        let g = LayoutGrammar::read2016();
        let s = StyleSheet::builtin("read2016").unwrap();
        let lines = LineDataset::parse_tsv("A\tx\n", &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = generate_document(s.shape, 2, &s, &g, &lines, &GlyphSet::builtin_set(), &mut rng, true);
        assert_eq!(r.unwrap_err(), SynthError::ExhaustedLines(ClassId::new("B").unwrap()));
    }

    #[test]
    fn too_many_lines_for_a_flat_sheet() {
        let g = LayoutGrammar::rimes2009();
        let mut s = StyleSheet::builtin("rimes2009").unwrap();
        s.entities.retain(|e| e.class.as_str() == "S");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = generate_document(s.shape, 6, &s, &g, &rimes_lines(), &GlyphSet::builtin_set(), &mut rng, true);
        assert!(matches!(r, Err(SynthError::PlacementInfeasible(_))));
    }
}
