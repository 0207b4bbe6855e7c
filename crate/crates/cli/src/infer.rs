use std::path::{Path, PathBuf};

use clap::Args;
use docrec::manifest::Manifest;
use docrec::markup::{serialize, LayoutGrammar, Token};
use docrec::model::attention_map::{combined, overlay};
use docrec::model::{DecodeOptions, DecoderState, DocumentModel};
use docrec::raster::Raster;
use docrec::train::{checkpoint_normalization, page_input};

use crate::error::{Failure, Result};
use crate::load;

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Page image; repeat for several pages.
    #[arg(long, required_unless_present = "manifest")]
    image: Vec<PathBuf>,
    /// Manifest whose images to transcribe, named by record id.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Resolution of the input images.
    #[arg(long, default_value_t = 150.0)]
    dpi: f64,
    /// Directory for `<id>.txt` transcripts and `<id>.probs.json` token
    /// probabilities; without it transcripts go to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stop decoding after this many tokens.
    #[arg(long)]
    max_steps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AttnDumpArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 150.0)]
    dpi: f64,
    /// Directory for `step_NNNN.png` overlays and `combined.png`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_steps: Option<usize>,
}

struct Loaded {
    model: DocumentModel,
    grammar: LayoutGrammar,
    norm: docrec::model::Normalization,
}

fn load_model(path: &Path) -> Result<Loaded> {
    let ck = load::checkpoint(path)?;
    let (model, grammar) = DocumentModel::from_checkpoint(&ck).map_err(|e| Failure::from(e).context(path.display()))?;
    Ok(Loaded {
        model,
        grammar,
        norm: checkpoint_normalization(&ck).unwrap_or_default(),
    })
}

fn run_model(m: &Loaded, page: &Raster, max_steps: Option<usize>) -> Result<DecoderState> {
    let x = page_input(page, &m.norm, m.model.config().stride)?;
    Ok(m.model.decode(
        &x,
        &DecodeOptions {
            max_steps,
            suppress_eot: false,
        },
    )?)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "page".into(), |s| s.to_string_lossy().into_owned())
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let m = load_model(&args.checkpoint)?;
    let mut inputs: Vec<(String, PathBuf)> = args.image.iter().map(|p| (stem(p), p.clone())).collect();
    if let Some(path) = &args.manifest {
        inputs.extend(Manifest::load(path)?.records.into_iter().map(|r| (r.id, r.image)));
    }
    if let Some(dir) = &args.out {
        load::create_dir(dir)?;
    }
    for (id, path) in &inputs {
        let page = load::page(path, args.dpi)?;
        let state = run_model(&m, &page, args.max_steps)?;
        let text = serialize(&state.transcript(m.model.vocab()));
        match &args.out {
            Some(dir) => {
                load::write(&dir.join(format!("{id}.txt")), format!("{text}\n"))?;
                let probs = serde_json::to_string(&state.token_probabilities())?;
                load::write(&dir.join(format!("{id}.probs.json")), probs)?;
            }
            None if inputs.len() == 1 => println!("{text}"),
            None => println!("{id}\t{text}"),
        }
    }
    Ok(())
}

pub fn attn_dump(args: &AttnDumpArgs) -> Result<()> {
    let m = load_model(&args.checkpoint)?;
    let page = load::page(&args.image, args.dpi)?;
    let state = run_model(&m, &page, args.max_steps)?;
    let vocab = m.model.vocab();
    let tokens = state.transcript(vocab);
    let stride = m.model.config().stride;
    load::create_dir(&args.out)?;

    // One map per emitted token; a final end-of-transcript step is left out.
    let maps = &state.attention[..tokens.len()];
    let mut classes = Vec::with_capacity(maps.len());
    let mut current = None;
    for (k, map) in maps.iter().enumerate() {
        if let Token::Begin(c) = tokens[k] {
            current = Some(c);
        }
        classes.push(current);
        let path = args.out.join(format!("step_{k:04}.png"));
        overlay(&page, map, stride).save(&path).map_err(|e| Failure::io(&path, e))?;
    }
    let order: Vec<_> = m.grammar.classes().iter().map(|c| c.id).collect();
    let path = args.out.join("combined.png");
    combined(&page, maps, &classes, &order, stride)
        .save(&path)
        .map_err(|e| Failure::io(&path, e))?;
    load::write(&args.out.join("transcript.txt"), format!("{}\n", serialize(&tokens)))?;
    eprintln!("{} steps written to {}", maps.len(), args.out.display());
    Ok(())
}
