use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::Args;
use docrec::manifest::Manifest;
use docrec::markup::parse_markup;
use docrec::metrics::{evaluate, EvalDocument};

use crate::error::{Failure, Result};
use crate::load;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Ground-truth manifest.
    #[arg(long)]
    gt: PathBuf,
    /// Prediction manifest, or a directory of `<id>.txt` transcripts with
    /// optional `<id>.probs.json` token probabilities.
    #[arg(long)]
    pred: PathBuf,
    /// Built-in grammar name or grammar file.
    #[arg(long)]
    grammar: String,
    /// Only score ground-truth records with this split tag.
    #[arg(long)]
    split: Option<String>,
    /// Also write the machine-readable records here.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Print the machine-readable records instead of the text report.
    #[arg(long)]
    json: bool,
}

struct Prediction {
    transcript: String,
    probs: Option<Vec<f64>>,
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let grammar = load::grammar(&args.grammar)?;
    let gt = Manifest::load(&args.gt)?;
    let gt: Vec<_> = match &args.split {
        Some(tag) => gt.split(tag).cloned().collect(),
        None => gt.records,
    };
    let ids: Vec<&str> = gt.iter().map(|r| r.id.as_str()).collect();
    let preds = if args.pred.is_dir() {
        from_dir(&args.pred, &ids)?
    } else {
        from_manifest(&args.pred, &ids, args.split.is_some())?
    };

    let mut docs = Vec::with_capacity(gt.len());
    let mut problems = Vec::new();
    for (r, p) in gt.iter().zip(preds) {
        let gt_seq = r.tokens(&grammar).map_err(|e| format!("{}: ground truth: {e}", r.id));
        let pred_seq = parse_markup(&p.transcript, &grammar).map_err(|e| format!("{}: prediction: {e}", r.id));
        match (gt_seq, pred_seq) {
            (Ok(gt), Ok(pred)) => docs.push(EvalDocument {
                id: r.id.clone(),
                gt,
                pred,
                probs: p.probs,
            }),
            (a, b) => problems.extend(a.err().into_iter().chain(b.err())),
        }
    }
    if !problems.is_empty() {
        return Err(Failure::Validation(problems.join("\n")));
    }
    let report = evaluate(&docs, &grammar)?;
    if let Some(path) = &args.records {
        load::write(path, report.to_records())?;
    }
    if args.json {
        print!("{}", report.to_records());
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}

fn from_manifest(path: &Path, ids: &[&str], subset: bool) -> Result<Vec<Prediction>> {
    let pred = Manifest::load(path)?;
    let want: BTreeSet<&str> = ids.iter().copied().collect();
    let have: BTreeSet<&str> = pred
        .records
        .iter()
        .map(|r| r.id.as_str())
        .filter(|id| !subset || want.contains(id))
        .collect();
    mismatch(&want, &have)?;
    Ok(ids
        .iter()
        .map(|id| Prediction {
            transcript: pred.get(id).expect("checked above").transcript.clone(),
            probs: None,
        })
        .collect())
}

fn from_dir(dir: &Path, ids: &[&str]) -> Result<Vec<Prediction>> {
    let want: BTreeSet<&str> = ids.iter().copied().collect();
    let have: BTreeSet<&str> = ids.iter().copied().filter(|id| dir.join(format!("{id}.txt")).is_file()).collect();
    mismatch(&want, &have)?;
    ids.iter()
        .map(|id| {
            let transcript = load::text(&dir.join(format!("{id}.txt")))?;
            let probs_path = dir.join(format!("{id}.probs.json"));
            let probs = if probs_path.is_file() {
                Some(
                    serde_json::from_str(&load::text(&probs_path)?)
                        .map_err(|e| Failure::Validation(format!("{}: {e}", probs_path.display())))?,
                )
            } else {
                None
            };
            Ok(Prediction {
                transcript: transcript.trim_end_matches(['\n', '\r']).to_string(),
                probs,
            })
        })
        .collect()
}

fn mismatch(want: &BTreeSet<&str>, have: &BTreeSet<&str>) -> Result<()> {
    let missing: Vec<&str> = want.difference(have).copied().collect();
    let extra: Vec<&str> = have.difference(want).copied().collect();
    if missing.is_empty() && extra.is_empty() {
        return Ok(());
    }
    let mut msg = String::from("prediction ids do not match the ground truth");
    if !missing.is_empty() {
        msg.push_str(&format!("\nmissing: {}", missing.join(" ")));
    }
    if !extra.is_empty() {
        msg.push_str(&format!("\nunexpected: {}", extra.join(" ")));
    }
    Err(Failure::Validation(msg))
}
