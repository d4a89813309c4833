//! `tsa`: batch evaluation of LLMs on targeted sentiment analysis.
//!
//! Exit codes: 0 success, 1 validation or scoring failure, 2 configuration
//! error, 3 fatal backend error (the run store is left resumable).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tsa_core::corpus::DatasetFormat;
use tsa_core::prompts::PromptKind;
use tsa_core::{Lang, Mode, Split};

#[derive(Parser)]
#[command(name = "tsa", version, about = "Targeted sentiment evaluation harness for LLMs")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset file and print per-entity-type counts.
    Validate(ValidateArgs),
    /// Run zero-shot or THoR inference into a resumable run store.
    Infer(InferArgs),
    /// Score predictions against gold labels.
    Evaluate(EvaluateArgs),
    /// Error analysis and result tables.
    #[command(subcommand)]
    Report(ReportCommand),
    /// Export or inspect recorded transcripts.
    #[command(subcommand)]
    Transcript(TranscriptCommand),
    /// List the runs in a store.
    Runs {
        #[arg(long)]
        store: PathBuf,
    },
}

#[derive(Args, Clone)]
struct DatasetArgs {
    /// Dataset file (.csv, .tsv or .jsonl).
    #[arg(long)]
    dataset: PathBuf,
    /// Override the format guessed from the extension.
    #[arg(long, value_parser = parse_format)]
    format: Option<DatasetFormat>,
    /// Language of the rows; required for CSV/TSV, a filter for JSONL.
    #[arg(long, value_parser = parse_lang)]
    lang: Option<Lang>,
    /// Split of the rows; required for CSV/TSV, a filter for JSONL.
    #[arg(long, value_parser = parse_split)]
    split: Option<Split>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// Sidecar JSONL with translated `sentence`/`target` per `id`.
    #[arg(long)]
    translation: Option<PathBuf>,
    /// Write the (merged) samples as canonical JSONL.
    #[arg(long)]
    export: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PromptArg {
    #[value(name = "PO", alias = "po")]
    Po,
    #[value(name = "PSE", alias = "pse")]
    Pse,
}

impl From<PromptArg> for PromptKind {
    fn from(p: PromptArg) -> Self {
        match p {
            PromptArg::Po => PromptKind::Original,
            PromptArg::Pse => PromptKind::SubjectExplicit,
        }
    }
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, value_parser = parse_mode, default_value = "zeroshot")]
    mode: Mode,
    /// Zero-shot prompt variant.
    #[arg(long, value_enum, default_value = "PO")]
    prompt: PromptArg,
    /// Backend config (TOML).
    #[arg(long)]
    backend: PathBuf,
    /// Run store directory.
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    /// Only the first N samples.
    #[arg(long)]
    limit: Option<usize>,
    /// Write predictions JSONL for the run.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Prompt wording overrides (TOML, same shape as the built-in registry).
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Write the run's exchanges as a replayable transcript.
    #[arg(long)]
    record_transcript: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct PredictionSource {
    /// Predictions JSONL (`id`, `pred`, `unk`).
    #[arg(long, conflicts_with_all = ["store", "run"])]
    predictions: Option<PathBuf>,
    /// Run store holding the run.
    #[arg(long, requires = "run")]
    store: Option<PathBuf>,
    /// Run id inside `--store`.
    #[arg(long, requires = "store")]
    run: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    source: PredictionSource,
    /// Row label in the results table.
    #[arg(long)]
    name: Option<String>,
    /// Write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Export every sample where the prediction differs from gold.
    Disagreements {
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        source: PredictionSource,
        /// Annotatable JSONL export.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarise an (annotated) disagreement export.
    Digest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Compare several systems sample by sample.
    Cross {
        #[command(flatten)]
        data: DatasetArgs,
        /// NAME=predictions.jsonl, at least twice.
        #[arg(long = "system", value_parser = parse_named_path, required = true)]
        systems: Vec<(String, PathBuf)>,
        /// Keep samples that at least this many systems got wrong.
        #[arg(long, default_value_t = 0)]
        min_wrong: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dev F1^PN per fine-tuning epoch from a checkpoint manifest.
    Curve {
        #[arg(long)]
        checkpoints: PathBuf,
        #[command(flatten)]
        data: DatasetArgs,
        /// CSV output (`epoch,f1_pn`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Results table from saved `evaluate --json` reports.
    Table {
        /// NAME=report.json, in row order.
        #[arg(long = "eval", value_parser = parse_named_path, required = true)]
        evals: Vec<(String, PathBuf)>,
    },
}

#[derive(Subcommand)]
enum TranscriptCommand {
    /// Write a replayable transcript for a finished run.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        run: String,
        /// Backend config the run used (no credentials needed).
        #[arg(long)]
        backend: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarise a transcript file.
    Inspect { path: PathBuf },
}

fn parse_format(s: &str) -> Result<DatasetFormat, String> {
    s.parse()
}

fn parse_lang(s: &str) -> Result<Lang, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

fn parse_named_path(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Validate(args) => commands::validate(args),
        Command::Infer(args) => commands::infer(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Report(cmd) => commands::report(cmd),
        Command::Transcript(cmd) => commands::transcript(cmd),
        Command::Runs { store } => commands::runs(&store),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code as u8)
        }
    }
}
