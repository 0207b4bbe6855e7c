use docrec::markup::{serialize, validate, LayoutGrammar, Token};
use docrec::synth::{generate_document, GlyphSet, LineDataset, StyleSheet, SynthDocument, SynthGenerator};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn lines_for(grammar: &LayoutGrammar) -> LineDataset {
    let text: String = grammar
        .classes()
        .iter()
        .filter(|c| !grammar.classes().iter().any(|k| k.parent == Some(c.id)))
        .map(|c| {
            let id = c.id;
            format!("{id}\t4\n{id}\tLa lettre du {id} est partie hier\n{id}\tvoici une ligne assez longue pour couper la colonne en deux parties\n")
        })
        .collect();
    LineDataset::parse_tsv(&text, grammar).unwrap()
}

fn generate(name: &str, l_doc: usize, seed: u64, crop: bool) -> (SynthDocument, StyleSheet, LayoutGrammar) {
    let g = LayoutGrammar::builtin(name).unwrap();
    let s = StyleSheet::builtin(name).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = generate_document(s.shape, l_doc, &s, &g, &lines_for(&g), &GlyphSet::builtin_set(), &mut rng, crop)
        .unwrap_or_else(|e| panic!("{name} l={l_doc} seed={seed}: {e}"));
    (d, s, g)
}

fn check(d: &SynthDocument, s: &StyleSheet, g: &LayoutGrammar, l_doc: usize, crop: bool) {
    let errs = validate(&d.ground_truth, g);
    assert!(errs.is_empty(), "{errs:?} in {}", serialize(&d.ground_truth));
    assert_eq!(d.line_count(), l_doc);
    let (h, w) = s.shape;
    for (i, a) in d.boxes().iter().enumerate() {
        assert!(a.right() <= w && a.bottom() + s.margin <= h, "{a:?}");
        for b in &d.boxes()[i + 1..] {
            assert!(!a.overlaps(b), "{a:?} overlaps {b:?}");
        }
    }
    let bottom = d.boxes().iter().map(|b| b.bottom()).max().unwrap();
    if crop {
        assert_eq!(d.image.height(), bottom.div_ceil(s.crop_stride) * s.crop_stride);
    } else {
        assert_eq!(d.image.height(), h);
    }
    assert_eq!(d.image.width(), w);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn read_pages_are_well_formed(seed in any::<u64>(), l in 1usize..=30, crop in any::<bool>()) {
        let (d, s, g) = generate("read2016", l, seed, crop);
        check(&d, &s, &g, l, crop);
    }

    #[test]
    fn rimes_pages_are_well_formed(seed in any::<u64>(), l in 1usize..=40, crop in any::<bool>()) {
        let (d, s, g) = generate("rimes2009", l, seed, crop);
        check(&d, &s, &g, l, crop);
    }
}

#[test]
fn one_line_rimes_page() {
    for seed in 0..20 {
        let (d, _, _) = generate("rimes2009", 1, seed, true);
        let t = d.ground_truth.tokens();
        assert!(matches!(t.first(), Some(Token::Begin(_))));
        assert!(matches!(t.last(), Some(Token::End(_))));
        assert!(t[1..t.len() - 1].iter().all(Token::is_char));
    }
}

#[test]
fn same_seed_same_page() {
    let (a, _, _) = generate("read2016", 5, 42, true);
    let (b, _, _) = generate("read2016", 5, 42, true);
    assert_eq!(a.image.data(), b.image.data());
    assert_eq!(a.ground_truth, b.ground_truth);
    let (c, _, _) = generate("read2016", 5, 43, true);
    assert_ne!(a.image.data(), c.image.data());
}

#[test]
fn generator_respects_line_bound() {
    let g = LayoutGrammar::read2016();
    let s = StyleSheet::builtin("read2016").unwrap();
    let lines = lines_for(&g);
    let mut gen = SynthGenerator::new(s, g, lines, GlyphSet::builtin_set(), vec![], 7).unwrap();
    for l in [1, 3, 12, 30, 100] {
        for _ in 0..5 {
            let d = gen.next(l, true).unwrap();
            assert!((1..=l.min(30)).contains(&d.line_count()));
        }
    }
}
