//! `docrec` command-line tool.

mod error;
mod eval;
mod infer;
mod load;
mod synth;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Page-level handwritten document recognition: evaluation, synthetic
/// pages, training and inference.
#[derive(Parser, Debug)]
#[command(name = "docrec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score predictions against ground truth (CER, WER, LOER, mAP_CER, PPER).
    Eval(eval::EvalArgs),
    /// Render synthetic pages and their manifest.
    GenSynth(synth::GenSynthArgs),
    /// Pre-train a line recogniser with CTC on rendered lines.
    PretrainLines(train::PretrainArgs),
    /// Train the page model.
    Train(train::TrainArgs),
    /// Transcribe page images.
    Predict(infer::PredictArgs),
    /// Write the attention of every decoding step over the page.
    AttnDump(infer::AttnDumpArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Eval(a) => eval::run(a),
        Command::GenSynth(a) => synth::run(a),
        Command::PretrainLines(a) => train::pretrain(a),
        Command::Train(a) => train::train(a),
        Command::Predict(a) => infer::predict(a),
        Command::AttnDump(a) => infer::attn_dump(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
