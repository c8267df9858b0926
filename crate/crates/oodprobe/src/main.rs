//! `oodprobe` command line: config-driven pipeline stages.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::Parser;

use oodprobe::pipeline::{run_pipeline, Stage};

#[derive(Parser, Debug)]
#[command(
    name = "oodprobe",
    about = "Measure and mitigate the out-of-domain gap of in-context-learning classifiers",
    after_help = "Stages: ingest, train-topics, score, split, synth, run, ablate, sweep, report, replay.\n\
                  Without --stage the full pipeline runs in dependency order."
)]
struct Args {
    /// Experiment config file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Run a single stage instead of the whole pipeline.
    #[arg(long, value_name = "NAME")]
    stage: Option<String>,

    /// Override the config seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Forbid network access; stub backends and cache hits only.
    #[arg(long)]
    offline: bool,

    /// Override the output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    let stage = match args.stage.as_deref().map(Stage::from_str).transpose() {
        Ok(stage) => stage,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(1);
        }
    };

    match run_pipeline(&args.config, stage, args.seed, args.offline, args.out) {
        Ok(outcome) => {
            if outcome.flagged_items > 0 {
                eprintln!(
                    "completed with {} flagged predictions (scored incorrect); see the report",
                    outcome.flagged_items
                );
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
