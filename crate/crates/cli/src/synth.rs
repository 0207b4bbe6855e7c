use std::path::PathBuf;

use clap::Args;
use docrec::manifest::Manifest;
use docrec::synth::SynthGenerator;

use crate::error::{Failure, Result};
use crate::load;

#[derive(Args, Debug)]
pub struct GenSynthArgs {
    /// Built-in style sheet name or sheet file; it names the grammar.
    #[arg(long)]
    sheet: String,
    /// Text lines, `class TAB text` per line.
    #[arg(long)]
    lines: PathBuf,
    /// Comma-separated built-in font names or font files (default: all
    /// built-in fonts).
    #[arg(long)]
    fonts: Option<String>,
    /// Number of pages.
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Upper bound on lines per page (default: the sheet's l_max).
    #[arg(long)]
    max_lines: Option<usize>,
    /// Crop each page below its last entity.
    #[arg(long)]
    crop: bool,
    /// Output directory for the PNG pages and `manifest.tsv`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn run(args: &GenSynthArgs) -> Result<()> {
    let sheet = load::sheet(&args.sheet)?;
    let grammar = load::grammar(&sheet.grammar)?;
    let lines = load::lines(&args.lines, &grammar)?;
    let fonts = load::fonts(args.fonts.as_deref())?;
    let l = args.max_lines.unwrap_or(sheet.l_max);
    if l == 0 {
        return Err(Failure::Validation("--max-lines must be positive".into()));
    }
    let mut gen = SynthGenerator::new(sheet, grammar, lines, fonts, vec![], args.seed)?;
    load::create_dir(&args.out)?;
    let mut manifest = Manifest::default();
    for i in 0..args.count {
        let doc = gen.next(l, args.crop)?;
        let name = format!("synth{i:05}.png");
        let path = args.out.join(&name);
        doc.image.save(&path).map_err(|e| Failure::from(e).context(path.display()))?;
        manifest.push(format!("synth{i:05}"), name, &doc.ground_truth);
    }
    load::write(&args.out.join("manifest.tsv"), manifest.to_text())?;
    eprintln!("wrote {} pages to {}", args.count, args.out.display());
    Ok(())
}
