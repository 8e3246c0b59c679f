//! `eocrc`: runs the risk-prediction pipeline stage by stage from a JSON config.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use eocrc_core::models::ModelKind;
use eocrc_core::pipeline::{Pipeline, PipelineConfig, StageOutcome};

#[derive(Parser)]
#[command(name = "eocrc", version, about = "Early-onset colorectal cancer risk pipeline")]
struct Cli {
    /// Pipeline config (JSON).
    #[arg(short, long, global = true, default_value = "configs/desk.json")]
    config: PathBuf,

    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Overrides the global `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides `workers` (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or load) the cohort and apply eligibility.
    Generate,
    /// Split the cohort and build design matrices.
    Featurize,
    /// Random-search and fit every configured model.
    Train,
    /// Cross-validated Youden thresholds at the target prevalence.
    Calibrate,
    /// Score the test runs and write the metrics table.
    Evaluate,
    /// SHAP waterfall for one patient plus gain importance for tree ensembles.
    Explain {
        #[arg(long)]
        model: ModelKind,
        /// Patient id; defaults to the first CRC patient of test run 0.
        #[arg(long)]
        patient: Option<String>,
    },
    /// LLM arm.
    Llm {
        #[command(subcommand)]
        command: LlmCommand,
    },
    /// Combine ML and LLM metrics into the comparison table.
    Report,
    /// All stages in order.
    Run,
}

#[derive(Subcommand)]
enum LlmCommand {
    /// Write the chat-format fine-tuning dataset for the training set.
    ExportFinetune,
    /// Query the configured endpoint (or mock) on every test run.
    Evaluate,
}

fn print(outcome: &StageOutcome) {
    println!("[{}] {}", outcome.stage.as_str(), outcome.summary.trim_end());
    for o in &outcome.outputs {
        println!("  wrote {o}");
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = PipelineConfig::load(&cli.config).with_context(|| format!("loading {}", cli.config.display()))?;
    if let Some(dir) = cli.output_dir {
        config.output_dir = dir;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    let pipeline = Pipeline::new(config)?;
    let outcomes = match cli.command {
        Command::Generate => vec![pipeline.generate()?],
        Command::Featurize => vec![pipeline.featurize()?],
        Command::Train => vec![pipeline.train()?],
        Command::Calibrate => vec![pipeline.calibrate()?],
        Command::Evaluate => vec![pipeline.evaluate()?],
        Command::Explain { model, patient } => vec![pipeline.explain(model, patient.as_deref())?],
        Command::Llm { command: LlmCommand::ExportFinetune } => vec![pipeline.llm_export_finetune()?],
        Command::Llm { command: LlmCommand::Evaluate } => vec![pipeline.llm_evaluate()?],
        Command::Report => vec![pipeline.report()?],
        Command::Run => pipeline.run()?,
    };
    outcomes.iter().for_each(print);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
