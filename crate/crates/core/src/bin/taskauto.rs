//! Command-line entry point: reproducible pipeline runs driven by a config
//! file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use taskauto_core::config::{load_config, PipelineConfig};
use taskauto_core::pipeline::{self, PipelineError};

#[derive(Parser)]
#[command(
    name = "taskauto",
    about = "Task automatability classification and occupation/industry risk reports",
    version
)]
struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Override the output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override the paraphrase provider ("mock" forces offline operation).
    #[arg(long, global = true, value_name = "KIND")]
    provider: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize tasks and resolve expert votes into labels.
    Ingest,
    /// Stratified train/eval/test split of the labeled corpus.
    Split,
    /// Expand the training split by paraphrasing.
    Augment,
    /// Build the subword vocabulary from the training split.
    BuildVocab,
    /// Train the encoder and keep the best checkpoint.
    Train,
    /// Score the checkpoint and baselines on a held-out split.
    Eval,
    /// Predict all tasks and export per-token attention mass.
    Predict,
    /// Roll predictions up into occupation/industry profiles.
    Aggregate,
    /// Write summary.json with counts, percentages, and rankings.
    Report,
    /// Run the configured augmentation or train-fraction sweep.
    Sweep,
    /// Verify analytic gradients against finite differences.
    Gradcheck,
}

fn load(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let path = cli.config.as_ref().ok_or_else(|| {
        PipelineError::Validation("--config PATH is required".into())
    })?;
    let mut cfg = load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.paths.output_dir = out.clone();
    }
    if let Some(provider) = &cli.provider {
        cfg.provider.kind = provider.clone();
        cfg.validate()?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = load(cli)?;
    match cli.command {
        Command::Ingest => pipeline::run_ingest(&cfg),
        Command::Split => pipeline::run_split(&cfg),
        Command::Augment => pipeline::run_augment(&cfg),
        Command::BuildVocab => pipeline::run_build_vocab(&cfg),
        Command::Train => pipeline::run_train(&cfg),
        Command::Eval => pipeline::run_eval(&cfg),
        Command::Predict => pipeline::run_predict(&cfg),
        Command::Aggregate => pipeline::run_aggregate(&cfg),
        Command::Report => pipeline::run_report(&cfg).map(|_| ()),
        Command::Sweep => pipeline::run_sweep_stage(&cfg),
        Command::Gradcheck => {
            let report = pipeline::run_gradcheck(&cfg)?;
            for tensor in &report.tensors {
                let status = if tensor.max_rel_error <= report.tolerance {
                    "ok"
                } else {
                    "FAIL"
                };
                println!("{:<24} {:>12.3e}  {status}", tensor.name, tensor.max_rel_error);
            }
            if report.pass() {
                println!("gradient check passed (tolerance {:.0e})", report.tolerance);
                Ok(())
            } else {
                Err(PipelineError::CheckFailed(format!(
                    "gradient check failed on {} tensor(s)",
                    report.failing().len()
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
