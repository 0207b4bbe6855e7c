mod common;

use std::ops::ControlFlow;

use common::nets::{ctc_brute, tiny_grammar};
use docrec::markup::{LayoutGrammar, Token};
use docrec::metrics::levenshtein;
use docrec::model::{DocumentModel, ModelConfig, TensorF, Vocab};
use docrec::raster::Raster;
use docrec::synth::{GlyphSet, LineDataset, StyleSheet, SynthGenerator};
use docrec::train::{
    augment, ctc_loss, curriculum_dropout, dilate, erode, gaussian_noise, line_input, pretrain_lines,
    render_training_line, train_documents, transfer_weights, AugmentConfig, DocumentSample, LineOcrModel,
    PretrainConfig, TrainConfig, TrainEvent, TrainRecord,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn dropout_decays_towards_its_floor(total in 1.0f64..1e5, floor in 0.0f64..0.9, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (t0, t1) = (a.min(b) * 3.0 * total, a.max(b) * 3.0 * total);
        let (r0, r1) = (curriculum_dropout(t0, total, floor), curriculum_dropout(t1, total, floor));
        prop_assert!(r0 <= 1.0 && r1 >= floor);
        if t1 - t0 > 1e-6 * total {
            prop_assert!(r1 < r0);
        }
    }

    #[test]
    fn ctc_matches_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = rng.gen_range(1..=5);
        let classes = rng.gen_range(2..=4);
        let blank = classes - 1;
        let target: Vec<usize> = (0..rng.gen_range(0..=frames.min(3))).map(|_| rng.gen_range(0..blank)).collect();
        let logits: Vec<f64> = (0..frames * classes).map(|_| rng.gen_range(-4.0..4.0)).collect();
        match ctc_loss(&logits, frames, classes, &target, blank) {
            Ok((loss, grad)) => {
                prop_assert!((loss - ctc_brute(&logits, frames, classes, &target, blank)).abs() < 1e-10);
                // Gradients of a log-softmax loss sum to zero on every frame.
                for row in grad.chunks(classes) {
                    prop_assert!(row.iter().sum::<f64>().abs() < 1e-10);
                }
            }
            Err(_) => prop_assert!(ctc_brute(&logits, frames, classes, &target, blank).is_infinite()),
        }
    }

    #[test]
    fn closing_never_loses_ink(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..12 * 9).map(|_| rng.gen_range(0.0..255.0)).collect();
        let img = Raster::from_vec(12, 9, data).unwrap();
        let closed = erode(&dilate(&img, 3), 3);
        for (c, o) in closed.data().iter().zip(img.data()) {
            prop_assert!(c <= o);
        }
    }

    #[test]
    fn morphology_matches_set_operations(bits in prop::collection::vec(any::<bool>(), 25)) {
        let img = Raster::from_vec(5, 5, bits.iter().map(|&b| if b { 0.0 } else { 255.0 }).collect()).unwrap();
        let ink = |r: &Raster| r.data().iter().map(|&v| v == 0.0).collect::<Vec<bool>>();
        prop_assert_eq!(ink(&dilate(&img, 3)), grow(&bits, 5, 5, true));
        prop_assert_eq!(ink(&erode(&img, 3)), grow(&bits, 5, 5, false));
    }
}

/// Binary 3x3 dilation (`any`) or erosion (`!any`) of an ink mask, over
/// the neighbours that lie inside the image.
fn grow(mask: &[bool], h: usize, w: usize, any: bool) -> Vec<bool> {
    (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as i64, (i % w) as i64);
            let mut hood = (-1..=1i64)
                .flat_map(|dy| (-1..=1i64).map(move |dx| (y + dy, x + dx)))
                .filter(|&(yy, xx)| yy >= 0 && xx >= 0 && yy < h as i64 && xx < w as i64)
                .map(|(yy, xx)| mask[yy as usize * w + xx as usize]);
            if any {
                hood.any(|b| b)
            } else {
                hood.all(|b| b)
            }
        })
        .collect()
}

#[test]
fn noise_has_the_requested_variance() {
    let img = Raster::new(250, 400, 128.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sigma = 6.0;
    let noisy = gaussian_noise(&img, sigma, &mut rng);
    let n = noisy.data().len() as f64;
    let mean = noisy.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = noisy.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    assert!((var / (sigma * sigma) - 1.0).abs() < 0.1, "variance {var}");
    assert!((mean - 128.0).abs() < 0.1);
}

#[test]
fn augmentation_gate_and_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut img = Raster::new(40, 60, 255.0);
    for y in 10..30 {
        for x in 15..45 {
            img.set(y, x, rng.gen_range(0.0..100.0));
        }
    }
    let off = AugmentConfig {
        probability: 0.0,
        ..AugmentConfig::default()
    };
    assert_eq!(augment(&img, &mut rng, &off).data(), img.data());
    let on = AugmentConfig {
        probability: 1.0,
        transform_probability: 1.0,
        ..AugmentConfig::default()
    };
    let a = augment(&img, &mut ChaCha8Rng::seed_from_u64(9), &on);
    let b = augment(&img, &mut ChaCha8Rng::seed_from_u64(9), &on);
    assert_eq!(a.data(), b.data());
    assert_ne!(a.data(), img.data());
    assert!(a.data().iter().all(|v| (0.0..=255.0).contains(v)));
}

fn line_config() -> ModelConfig {
    let mut c = ModelConfig::desk(1);
    c.dropout = 0.0;
    c
}

#[test]
fn transfer_copies_the_encoder_and_character_columns() {
    let g = tiny_grammar();
    let line = LineOcrModel::new(line_config(), vec!['c', 'a', 'z', 'e'], 3).unwrap();
    let v = Vocab::from_grammar(&g);
    let mut cfg = line_config();
    cfg.vocab_size = v.output_size();
    let mut doc = DocumentModel::new(cfg, v, 8).unwrap();
    let before = doc.params.by_name("decoder.out.weight").unwrap().clone();
    let before_bias = doc.params.by_name("decoder.out.bias").unwrap().clone();
    transfer_weights(&line, &mut doc).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let img = TensorF::from_fn(vec![1, 64, 48], |_| rng.gen_range(-1.0..1.0));
    assert_eq!(line.encode(&img).unwrap(), doc.encode(&img).unwrap());

    let (lw, lb) = (
        line.params.by_name("line.decision.weight").unwrap(),
        line.params.by_name("line.decision.bias").unwrap(),
    );
    let (dw, db) = (
        doc.params.by_name("decoder.out.weight").unwrap(),
        doc.params.by_name("decoder.out.bias").unwrap(),
    );
    let (cl, cd) = (lw.shape()[1], dw.shape()[1]);
    let mut copied = vec![None; cd];
    for (i, &c) in line.alphabet().iter().enumerate() {
        if let Ok(j) = doc.vocab().id(Token::Char(c)) {
            copied[j] = Some(i);
        }
    }
    assert_eq!(copied.iter().flatten().count(), 3, "z is not in the page alphabet");
    for (j, src) in copied.iter().enumerate() {
        for r in 0..dw.shape()[0] {
            let want = match src {
                Some(i) => lw.data()[r * cl + i],
                None => before.data()[r * cd + j],
            };
            assert_eq!(dw.data()[r * cd + j], want);
        }
        assert_eq!(db.data()[j], src.map_or(before_bias.data()[j], |i| lb.data()[i]));
    }

    let mut small = ModelConfig::desk(v_size(&g));
    small.encoder_channels = vec![8, 16, 24, 32, 64];
    small.convs_per_block = 1;
    let mut other = DocumentModel::new(small, Vocab::from_grammar(&g), 1).unwrap();
    assert!(transfer_weights(&line, &mut other).is_err());
}

fn v_size(g: &LayoutGrammar) -> usize {
    Vocab::from_grammar(g).output_size()
}

const SHEET: &str = "[sheet]\nname = small\ngrammar = rimes2009\nshape = 128x192\nl_max = 3\n\
font_size = 16..20\nline_gap = 2..4\nindent = 0..4\nentity_gap = 4..8\nmargin = 8\ncrop_stride = 32\n\n\
[entity Y]\ncolumns = 0.04..0.96\noffset = 0..8\nlines = 1..2\nweight = 1\nmax_chars = 12\nband = new\n\n\
[entity B]\ncolumns = 0.04..0.96\noffset = 0..8\nlines = 1..2\nweight = 1\nmax_chars = 12\nband = new\n";

fn run_training(seed: u64) -> (Vec<TrainRecord>, Vec<f64>) {
    let g = LayoutGrammar::rimes2009();
    let sheet = StyleSheet::parse(SHEET).unwrap();
    let lines = LineDataset::parse_tsv("Y\tObjet\nY\tDemande\nB\tMadame\nB\tmerci bien\n", &g).unwrap();
    let mut gen = SynthGenerator::new(sheet, g.clone(), lines, vec![GlyphSet::mono8()], vec![], 5).unwrap();
    let real: Vec<DocumentSample> = (0..2)
        .map(|i| {
            let d = gen.next(2, true).unwrap();
            DocumentSample {
                id: i.to_string(),
                image: d.image,
                gt: d.ground_truth,
            }
        })
        .collect();
    let v = Vocab::from_grammar(&g);
    let mut model = DocumentModel::new(ModelConfig::desk(v.output_size()), v, 2).unwrap();
    let cfg = TrainConfig {
        steps: 12,
        seed,
        ..TrainConfig::default()
    };
    let ck = train_documents(&cfg, &real, Some(&mut gen), &mut model, &g, |_| ControlFlow::Continue(())).unwrap();
    let history: Vec<TrainRecord> = serde_json::from_value(ck.header.meta["history"].clone()).unwrap();
    let weights = model.params.iter().flat_map(|(_, t)| t.data().to_vec()).collect();
    (history, weights)
}

#[test]
fn training_is_reproducible() {
    let (h1, w1) = run_training(4);
    let (h2, w2) = run_training(4);
    assert_eq!(h1.len(), 12);
    assert_eq!(h1, h2);
    assert_eq!(w1, w2);
    assert!(h1.iter().any(|r| r.synthetic) && h1.iter().any(|r| !r.synthetic));
    assert!(h1.iter().all(|r| r.loss.is_finite() && r.synth_fraction == 0.9));
    let (h3, _) = run_training(5);
    assert_ne!(h1, h3);
}

#[test]
fn training_stops_when_asked() {
    let g = LayoutGrammar::rimes2009();
    let sheet = StyleSheet::parse(SHEET).unwrap();
    let lines = LineDataset::parse_tsv("Y\tObjet\nB\tmerci\n", &g).unwrap();
    let mut gen = SynthGenerator::new(sheet, g.clone(), lines, vec![GlyphSet::mono8()], vec![], 5).unwrap();
    let v = Vocab::from_grammar(&g);
    let mut model = DocumentModel::new(ModelConfig::desk(v.output_size()), v, 2).unwrap();
    let cfg = TrainConfig {
        steps: 50,
        checkpoint_every: 2,
        ..TrainConfig::default()
    };
    let mut seen = (0, 0);
    let ck = train_documents(&cfg, &[], Some(&mut gen), &mut model, &g, |ev| {
        match ev {
            TrainEvent::Step(..) => seen.0 += 1,
            TrainEvent::Checkpoint(_) => seen.1 += 1,
        }
        if seen.0 == 5 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    assert_eq!(seen, (5, 2));
    assert_eq!(ck.header.meta["step"], 5);
}

#[test]
fn line_pretraining_learns_its_lines() {
    let texts: Vec<String> = [
        "abc", "bad", "cab", "dab", "ace", "bead", "fade", "cafe", "deaf", "face", "aa bb", "ebb", "add", "dee", "fee",
        "bed", "fed", "cede", "beef", "dace",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let alphabet: Vec<char> = "abcdef ".chars().collect();
    let mut model = LineOcrModel::new(line_config(), alphabet, 1).unwrap();
    let fonts = vec![GlyphSet::mono8()];
    let cfg = PretrainConfig {
        lr: 1e-3,
        batch_size: 4,
        steps: 1500,
        final_dropout: 0.0,
        augment: AugmentConfig::off(),
        font_size: (16, 16),
        seed: 6,
        ..PretrainConfig::default()
    };
    let errors = |m: &LineOcrModel| -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        texts
            .iter()
            .map(|t| {
                let x = render_training_line(t, m, &fonts, &cfg, &mut rng).unwrap();
                let got: Vec<char> = m.transcribe(&x).unwrap().chars().collect();
                levenshtein(&got, &t.chars().collect::<Vec<_>>())
            })
            .sum()
    };
    let mut done = None;
    let history = pretrain_lines(&cfg, &mut model, &texts, &fonts, |r, m| {
        if r.step % 50 == 0 && errors(m) == 0 {
            done = Some(r.step);
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    })
    .unwrap();
    let step = done.unwrap_or_else(|| panic!("{} errors after {} updates", errors(&model), history.len()));
    assert!(history.first().unwrap().loss > history.last().unwrap().loss);
    assert_eq!(history.len(), step);
}

#[test]
fn short_lines_are_padded_for_ctc() {
    let img = Raster::new(24, 8, 255.0);
    let x = line_input(&img, &Default::default(), (32, 8), 5).unwrap();
    assert_eq!(x.shape(), &[1, 32, 40]);
}
