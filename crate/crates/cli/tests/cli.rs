use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use docrec::markup::{parse_markup, LayoutGrammar};
use docrec::metrics::MetricReport;
use docrec::raster::Raster;

fn docrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_docrec")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = docrec(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    docrec(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const GRAMMAR: &str = "[grammar]\nname = example\n[classes]\nX - 0 *\nB - 0 *\nA B 0 *\n\
[alphabet]\nU+0020\nU+0030..U+0039\nU+0061..U+007A\n[order]\ntop-bottom-left-right\n";

const RUNNING: &str = "<X>text1</X><B><A>text2</A><A>text3</A></B>";

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture {
            dir: tempfile::tempdir().unwrap(),
        };
        f.write("example.grammar", GRAMMAR);
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).unwrap();
        }
        std::fs::write(&p, text).unwrap();
        p
    }
}

#[test]
fn identical_predictions_score_perfectly() {
    let f = Fixture::new();
    let gt = f.write("gt.tsv", &format!("d1\td1.png\t{RUNNING}\nd2\td2.png\t<X>abc de</X>\n"));
    let out = ok(&["eval", "--gt", s(&gt), "--pred", s(&gt), "--grammar", s(&f.path("example.grammar"))]);
    for line in ["cer: 0\n", "wer: 0\n", "loer: 0\n", "map_cer: 100\n", "pper: 0\n"] {
        assert!(out.contains(line), "{line:?} missing from\n{out}");
    }
}

#[test]
fn confidences_appear_in_the_dump() {
    let f = Fixture::new();
    let g = LayoutGrammar::parse(GRAMMAR).unwrap();
    let seq = parse_markup(RUNNING, &g).unwrap();
    let mut layout = [0.90, 0.70, 0.95, 0.82, 0.86, 0.80, 0.80, 0.75].into_iter();
    let probs: Vec<f64> = seq
        .iter()
        .map(|t| if t.is_layout() { layout.next().unwrap() } else { 1.0 })
        .collect();
    let gt = f.write("gt.tsv", &format!("ex\tex.png\t{RUNNING}\n"));
    f.write("pred/ex.txt", &format!("{RUNNING}\n"));
    f.write("pred/ex.probs.json", &serde_json::to_string(&probs).unwrap());
    let out = ok(&["eval", "--gt", s(&gt), "--pred", s(&f.path("pred")), "--grammar", s(&f.path("example.grammar"))]);
    assert!(out.contains("doc.ex.X: 0.80\n"), "{out}");
    assert!(out.contains("doc.ex.A: 0.84 0.80\n"), "{out}");
    assert!(out.contains("doc.ex.B: 0.85\n"), "{out}");
}

#[test]
fn unbalanced_prediction_counts_repairs() {
    let f = Fixture::new();
    let gt = f.write("gt.tsv", &format!("ex\tex.png\t{RUNNING}\n"));
    let pred = f.write("pred.tsv", "ex\tex.png\t<X>text1<B><A>text2</A><A>text3</B></X>\n");
    let records = f.path("records.jsonl");
    let out = ok(&[
        "eval",
        "--gt",
        s(&gt),
        "--pred",
        s(&pred),
        "--grammar",
        s(&f.path("example.grammar")),
        "--records",
        s(&records),
        "--json",
    ]);
    let report = MetricReport::from_records(&out).unwrap();
    assert!(report.pper > 0.0);
    assert!(report.cer.is_finite() && report.loer.is_finite());
    assert_eq!(report.to_records(), out);
    assert_eq!(std::fs::read_to_string(&records).unwrap(), out);
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    let grammar = f.path("example.grammar");
    let gt = f.write("gt.tsv", "a\ta.png\t<X>ab</X>\nb\tb.png\t<X>cd</X>\n");
    let pred = f.write("pred.tsv", "a\ta.png\t<X>ab</X>\nc\tc.png\t<X>cd</X>\n");
    let out = docrec(&["eval", "--gt", s(&gt), "--pred", s(&pred), "--grammar", s(&grammar)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing: b") && err.contains("unexpected: c"), "{err}");

    let bad = f.write("bad.tsv", "a\ta.png\t<X>ab</Q>\nb\tb.png\t<X>c\u{1F600}</X>\n");
    let out = docrec(&["eval", "--gt", s(&gt), "--pred", s(&bad), "--grammar", s(&grammar)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("a: prediction") && err.contains("b: prediction"), "{err}");

    let missing = f.path("nope.tsv");
    assert_eq!(code(&["eval", "--gt", s(&missing), "--pred", s(&gt), "--grammar", s(&grammar)]), 3);
    assert_eq!(code(&["eval", "--gt", s(&gt)]), 2);

    let junk = f.write("junk.ckpt", "not a checkpoint");
    let img = f.path("page.png");
    Raster::new(64, 48, 255.0).save(&img).unwrap();
    assert_eq!(code(&["predict", "--image", s(&img), "--checkpoint", s(&junk)]), 4);
    assert_eq!(code(&["predict", "--image", s(&img), "--checkpoint", s(&f.path("none.ckpt"))]), 3);
}

const SHEET: &str = "[sheet]\nname = small\ngrammar = rimes2009\nshape = 128x192\nl_max = 3\n\
font_size = 16..20\nline_gap = 2..4\nindent = 0..4\nentity_gap = 4..8\nmargin = 8\ncrop_stride = 32\n\n\
[entity Y]\ncolumns = 0.04..0.96\noffset = 0..8\nlines = 1..2\nweight = 1\nmax_chars = 12\nband = new\n\n\
[entity B]\ncolumns = 0.04..0.96\noffset = 0..8\nlines = 1..2\nweight = 1\nmax_chars = 12\nband = new\n";

#[test]
fn synthetic_pages_follow_the_seed() {
    let f = Fixture::new();
    let sheet = f.write("small.sheet", SHEET);
    let lines = f.write("lines.tsv", "Y\tObjet\nY\tDemande\nB\tMadame\nB\tmerci bien\n");
    let run = |out: &str, seed: &str| {
        ok(&[
            "gen-synth",
            "--sheet",
            s(&sheet),
            "--lines",
            s(&lines),
            "--count",
            "3",
            "--crop",
            "--seed",
            seed,
            "--out",
            s(&f.path(out)),
        ]);
        let manifest = std::fs::read_to_string(f.path(out).join("manifest.tsv")).unwrap();
        let pages: Vec<Vec<u8>> = (0..3)
            .map(|i| std::fs::read(f.path(out).join(format!("synth{i:05}.png"))).unwrap())
            .collect();
        (manifest, pages)
    };
    let a = run("a", "4");
    assert_eq!(a, run("b", "4"));
    assert_ne!(a, run("c", "5"));
    assert_eq!(a.0.lines().count(), 3);
    let gt = f.path("a").join("manifest.tsv");
    let out = ok(&["eval", "--gt", s(&gt), "--pred", s(&gt), "--grammar", "rimes2009"]);
    assert!(out.contains("cer: 0\n"));
}

/// Trains a desk model on one 64x48 page whose transcript is `a`.
fn one_token_model(f: &Fixture) -> (PathBuf, PathBuf) {
    let mut page = Raster::new(64, 48, 255.0);
    for y in 20..40 {
        for x in 10..30 {
            page.set(y, x, 20.0);
        }
    }
    let img = f.path("page.png");
    page.save(&img).unwrap();
    let manifest = f.write("train.tsv", "page\tpage.png\ta\n");
    let config = f.write(
        "train.json",
        r#"{"lr": 0.001, "error_rate": 0.0, "final_dropout": 0.0, "augment": {"probability": 0.0}}"#,
    );
    let ckpt = f.path("page.ckpt");
    ok(&[
        "train",
        "--train",
        s(&manifest),
        "--grammar",
        "rimes2009",
        "--config",
        s(&config),
        "--steps",
        "150",
        "--seed",
        "1",
        "--out",
        s(&ckpt),
        "--log",
        s(&f.path("train.jsonl")),
    ]);
    (img, ckpt)
}

#[test]
fn predict_and_attention_dump() {
    let f = Fixture::new();
    let (img, ckpt) = one_token_model(&f);
    assert_eq!(std::fs::read_to_string(f.path("train.jsonl")).unwrap().lines().count(), 150);

    assert_eq!(ok(&["predict", "--image", s(&img), "--checkpoint", s(&ckpt)]), "a\n");
    let pred = f.path("pred");
    ok(&["predict", "--image", s(&img), "--checkpoint", s(&ckpt), "--out", s(&pred)]);
    assert_eq!(std::fs::read_to_string(pred.join("page.txt")).unwrap(), "a\n");
    let probs: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(pred.join("page.probs.json")).unwrap()).unwrap();
    assert_eq!(probs.len(), 1);

    let dump = f.path("attn");
    ok(&["attn-dump", "--image", s(&img), "--checkpoint", s(&ckpt), "--out", s(&dump)]);
    let steps: Vec<_> = std::fs::read_dir(&dump)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("step_"))
        .collect();
    assert_eq!(steps.len(), 1);
    for name in ["step_0000.png", "combined.png"] {
        let overlay = image::open(dump.join(name)).unwrap();
        assert_eq!((overlay.width(), overlay.height()), (48, 64));
    }
    assert_eq!(std::fs::read_to_string(dump.join("transcript.txt")).unwrap(), "a\n");
}

#[test]
fn training_commands_are_deterministic() {
    let f = Fixture::new();
    let lines = f.write("lines.tsv", "Y\tab\nB\tba a\n");
    let line_ckpt = |name: &str| {
        let p = f.path(name);
        ok(&[
            "pretrain-lines",
            "--lines",
            s(&lines),
            "--grammar",
            "rimes2009",
            "--fonts",
            "mono8",
            "--profile",
            "tiny",
            "--steps",
            "2",
            "--seed",
            "3",
            "--out",
            s(&p),
        ]);
        p
    };
    let l1 = line_ckpt("l1.ckpt");
    let l2 = line_ckpt("l2.ckpt");
    assert_eq!(std::fs::read(&l1).unwrap(), std::fs::read(&l2).unwrap());

    let mut page = Raster::new(64, 48, 255.0);
    page.set(10, 10, 0.0);
    page.save(f.path("p.png")).unwrap();
    let manifest = f.write("train.tsv", "p\tp.png\t<Y>ab</Y>\n");
    let sheet = f.write("small.sheet", SHEET);
    let page_ckpt = |name: &str| {
        let p = f.path(name);
        ok(&[
            "train",
            "--train",
            s(&manifest),
            "--grammar",
            "rimes2009",
            "--pretrained",
            s(&l1),
            "--synth-sheet",
            s(&sheet),
            "--synth-lines",
            s(&lines),
            "--fonts",
            "mono8",
            "--steps",
            "2",
            "--seed",
            "9",
            "--out",
            s(&p),
        ]);
        std::fs::read(p).unwrap()
    };
    assert_eq!(page_ckpt("p1.ckpt"), page_ckpt("p2.ckpt"));

    assert_eq!(code(&["train", "--init", s(&l1), "--out", s(&f.path("x.ckpt"))]), 4);
}
