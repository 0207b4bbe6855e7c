use std::collections::BTreeSet;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use docrec::manifest::Manifest;
use docrec::markup::LayoutGrammar;
use docrec::model::{DocumentModel, ModelConfig, Normalization, Vocab};
use docrec::synth::{LineDataset, SynthGenerator};
use docrec::train::{
    pretrain_lines, train_documents, transfer_weights, DocumentSample, LineOcrModel, PretrainConfig, TrainConfig,
    TrainEvent,
};
use serde::Serialize;

use crate::error::{Failure, Result};
use crate::load;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Profile {
    /// Published sizes: d_model 256, 8 decoder layers.
    Paper,
    /// d_model 64, 2 layers; trains on one CPU core.
    Desk,
    /// d_model 8, for smoke tests.
    Tiny,
}

impl Profile {
    fn config(self, vocab_size: usize) -> ModelConfig {
        match self {
            Profile::Paper => ModelConfig::paper(vocab_size),
            Profile::Desk => ModelConfig::desk(vocab_size),
            Profile::Tiny => ModelConfig::tiny(vocab_size),
        }
    }
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    /// Text lines, `class TAB text` per line.
    #[arg(long)]
    lines: PathBuf,
    /// Grammar whose classes and alphabet the lines use.
    #[arg(long)]
    grammar: String,
    #[arg(long)]
    fonts: Option<String>,
    /// JSON pre-training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    /// Overrides the number of updates in the settings.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Line checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines log of every update.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Manifest of real training pages.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Only use manifest records with this split tag.
    #[arg(long)]
    split: Option<String>,
    /// Grammar of a new model; taken from the checkpoint with --init.
    #[arg(long)]
    grammar: Option<String>,
    /// Resolution of the training images.
    #[arg(long, default_value_t = 150.0)]
    dpi: f64,
    /// Style sheet for synthetic pages.
    #[arg(long)]
    synth_sheet: Option<String>,
    /// Lines for synthetic pages (default: cut from the training transcripts).
    #[arg(long)]
    synth_lines: Option<PathBuf>,
    #[arg(long)]
    fonts: Option<String>,
    /// Line checkpoint whose encoder and character weights start the model.
    #[arg(long, conflicts_with = "init")]
    pretrained: Option<PathBuf>,
    /// Page checkpoint to continue from.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    /// JSON training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Page checkpoint to write (also rewritten at every intermediate save).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
}

fn write_log<T: Serialize>(path: Option<&Path>, records: &[T]) -> Result<()> {
    let Some(path) = path else { return Ok(()) };
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    load::write(path, text)
}

pub fn pretrain(args: &PretrainArgs) -> Result<()> {
    let grammar = load::grammar(&args.grammar)?;
    let lines = load::lines(&args.lines, &grammar)?;
    let fonts = load::fonts(args.fonts.as_deref())?;
    let mut cfg: PretrainConfig = load::config(args.config.as_deref())?;
    if let Some(s) = args.steps {
        cfg.steps = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let texts: Vec<String> = lines.records().iter().map(|r| r.text.clone()).collect();
    let alphabet: Vec<char> = texts.iter().flat_map(|t| t.chars()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut model = LineOcrModel::new(args.profile.config(1), alphabet, cfg.seed)?;
    let history = pretrain_lines(&cfg, &mut model, &texts, &fonts, |r, _| {
        if r.step % 100 == 0 {
            eprintln!("update {} loss {:.4} dropout {:.3}", r.step, r.loss, r.tau);
        }
        ControlFlow::Continue(())
    })?;
    let meta = serde_json::json!({
        "pretrain_config": cfg,
        "normalization": cfg.normalization,
        "history": history,
    });
    model
        .to_checkpoint(meta)
        .save(&args.out)
        .map_err(|e| Failure::from(e).context(args.out.display()))?;
    write_log(args.log.as_deref(), &history)
}

fn real_pages(args: &TrainArgs, grammar: &LayoutGrammar) -> Result<Vec<DocumentSample>> {
    let Some(path) = &args.train else {
        return Ok(Vec::new());
    };
    let manifest = Manifest::load(path)?;
    let records: Vec<_> = match &args.split {
        Some(tag) => manifest.split(tag).collect(),
        None => manifest.records.iter().collect(),
    };
    let mut problems = Vec::new();
    let mut pages = Vec::new();
    for r in records {
        match r.tokens(grammar) {
            Ok(gt) => pages.push(DocumentSample {
                id: r.id.clone(),
                image: load::page(&r.image, args.dpi)?,
                gt,
            }),
            Err(e) => problems.push(format!("{}: {e}", r.id)),
        }
    }
    if !problems.is_empty() {
        return Err(Failure::Validation(problems.join("\n")));
    }
    Ok(pages)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = load::config(args.config.as_deref())?;
    if let Some(s) = args.steps {
        cfg.steps = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let (mut model, grammar) = match &args.init {
        Some(path) => {
            let (model, grammar) = DocumentModel::from_checkpoint(&load::checkpoint(path)?)
                .map_err(|e| Failure::from(e).context(path.display()))?;
            if let Some(spec) = &args.grammar {
                if load::grammar(spec)?.to_text() != grammar.to_text() {
                    return Err(Failure::Validation(format!("{spec} is not the grammar of {}", path.display())));
                }
            }
            (model, grammar)
        }
        None => {
            let spec = args
                .grammar
                .as_deref()
                .ok_or_else(|| Failure::Validation("--grammar is required without --init".into()))?;
            let grammar = load::grammar(spec)?;
            let vocab = Vocab::from_grammar(&grammar);
            let line = match &args.pretrained {
                Some(p) => Some(LineOcrModel::from_checkpoint(&load::checkpoint(p)?).map_err(|e| Failure::from(e).context(p.display()))?),
                None => None,
            };
            let mut config = match &line {
                Some(l) => l.config().clone(),
                None => args.profile.config(vocab.output_size()),
            };
            config.vocab_size = vocab.output_size();
            let mut model = DocumentModel::new(config, vocab, cfg.seed)?;
            if let Some(l) = &line {
                transfer_weights(l, &mut model)?;
            }
            (model, grammar)
        }
    };

    let real = real_pages(args, &grammar)?;
    if !real.is_empty() {
        cfg.normalization = Normalization::of_all(real.iter().map(|d| &d.image));
    }
    let mut synth = match &args.synth_sheet {
        Some(spec) => {
            let sheet = load::sheet(spec)?;
            let lines = match &args.synth_lines {
                Some(p) => load::lines(p, &grammar)?,
                None => {
                    let gts: Vec<_> = real.iter().map(|d| d.gt.clone()).collect();
                    let max = sheet.entities.iter().map(|e| e.max_chars).max().unwrap_or(80);
                    LineDataset::from_documents(&gts, &grammar, max)?
                }
            };
            let fonts = load::fonts(args.fonts.as_deref())?;
            Some(SynthGenerator::new(sheet, grammar.clone(), lines, fonts, vec![], cfg.seed.wrapping_add(1))?)
        }
        None => None,
    };

    let mut saved = Ok(());
    let ck = train_documents(&cfg, &real, synth.as_mut(), &mut model, &grammar, |ev| {
        match ev {
            TrainEvent::Step(r, _) if r.step % 100 == 0 => {
                eprintln!(
                    "update {} loss {:.4} dropout {:.3} synthetic share {:.2} lines {}",
                    r.step, r.loss, r.tau, r.synth_fraction, r.l
                );
            }
            TrainEvent::Checkpoint(ck) => {
                saved = ck.save(&args.out);
                if saved.is_err() {
                    return ControlFlow::Break(());
                }
            }
            _ => {}
        }
        ControlFlow::Continue(())
    })?;
    saved
        .and_then(|_| ck.save(&args.out))
        .map_err(|e| Failure::from(e).context(args.out.display()))?;
    let history: Vec<docrec::train::TrainRecord> = serde_json::from_value(ck.header.meta["history"].clone())?;
    write_log(args.log.as_deref(), &history)
}
