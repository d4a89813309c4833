use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::Path;

use anyhow::{anyhow, Context};

use tsa_core::backend::{build_backend, load_transcript, save_transcript, BackendConfig, FinishReason};
use tsa_core::chain::{collect_records, run_predictions, run_thor, run_transcript, run_zeroshot, ChainError, RunOptions};
use tsa_core::corpus::{export_jsonl, import_dataset, import_path, merge_translation, validate_split, CorpusError};
use tsa_core::metrics::{detail_table, results_table, EvalReport};
use tsa_core::predictions::{
    checkpoint_curve, evaluate_predictions, load_checkpoint_manifest, load_predictions, save_predictions,
};
use tsa_core::prompts::PromptRegistry;
use tsa_core::report::{
    cross_model_table, disagreement_digest, mine_disagreements, read_disagreements, wrong_in_at_least,
    write_disagreements, SystemAnswer,
};
use tsa_core::{Mode, Prediction, RunStore, Sample};

use crate::{DatasetArgs, EvaluateArgs, InferArgs, PredictionSource, ReportCommand, TranscriptCommand, ValidateArgs};

/// An error together with the process exit code it maps to.
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

const INVALID: i32 = 1;
const CONFIG: i32 = 2;
const BACKEND: i32 = 3;

trait ExitWith<T> {
    fn exit(self, code: i32) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitWith<T> for Result<T, E> {
    fn exit(self, code: i32) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn fail(code: i32, error: anyhow::Error) -> Failure {
    Failure { code, error }
}

type CmdResult = Result<(), Failure>;

fn load_dataset(args: &DatasetArgs) -> Result<Vec<Sample>, Failure> {
    let loaded = match args.format {
        Some(format) => import_dataset(&args.dataset, format, args.lang, args.split),
        None => import_path(&args.dataset, args.lang, args.split),
    };
    loaded.map_err(|e| {
        let code = match e {
            CorpusError::Unspecified(_) | CorpusError::UnknownFormat(_) => CONFIG,
            _ => INVALID,
        };
        let mut msg = format!("{}: {e}", args.dataset.display());
        for row in e.row_errors().iter().skip(1) {
            let _ = write!(msg, "\n  {row}");
        }
        fail(code, anyhow!(msg))
    })
}

pub fn validate(args: ValidateArgs) -> CmdResult {
    let mut samples = load_dataset(&args.data)?;
    if let Some(path) = &args.translation {
        samples = merge_translation(samples, path).exit(INVALID)?;
    }
    print!("{}", validate_split(&samples));
    if let Some(out) = &args.export {
        export_jsonl(&samples, out).with_context(|| out.display().to_string()).exit(INVALID)?;
        println!("wrote {} samples to {}", samples.len(), out.display());
    }
    Ok(())
}

pub fn infer(args: InferArgs) -> CmdResult {
    let mut samples = load_dataset(&args.data)?;
    if let Some(n) = args.limit {
        samples.truncate(n);
    }
    let lang = match (args.data.lang, samples.first()) {
        (Some(lang), _) => lang,
        (None, Some(s)) => s.lang,
        (None, None) => return Err(fail(INVALID, anyhow!("dataset is empty"))),
    };
    let registry = match &args.registry {
        Some(path) => PromptRegistry::with_overrides(path),
        None => Ok(PromptRegistry::builtin()),
    }
    .exit(CONFIG)?;
    let config = BackendConfig::load(&args.backend).exit(CONFIG)?;
    let backend = build_backend(&config).exit(CONFIG)?;
    let store = RunStore::open(&args.store).exit(INVALID)?;
    let options = RunOptions { max_in_flight: args.max_in_flight, brevity_suffix: config.brevity_suffix };

    let outcome = match args.mode {
        Mode::Zeroshot => {
            let spec = registry.prompt_for(args.prompt.into(), lang).exit(CONFIG)?;
            run_zeroshot(&samples, spec, &backend, &store, options)
        }
        Mode::Thor => {
            let chain = registry.chain(lang).exit(CONFIG)?;
            run_thor(&samples, chain, &backend, &store, options)
        }
    };
    let manifest = match outcome {
        Ok(m) => m,
        Err(ChainError::Fatal { manifest, error }) => {
            let c = manifest.counts;
            return Err(fail(
                BACKEND,
                anyhow!(
                    "run {} stopped: {error} ({} completed, {} failed, {} pending; rerun to resume)",
                    manifest.run_id,
                    c.completed,
                    c.failed,
                    c.pending
                ),
            ));
        }
        Err(e @ (ChainError::Prompt(_) | ChainError::NoWorkers)) => return Err(fail(CONFIG, e.into())),
        Err(e) => return Err(fail(INVALID, e.into())),
    };

    let c = manifest.counts;
    println!("run {}", manifest.run_id);
    println!("completed {}  failed {}  pending {}", c.completed, c.failed, c.pending);
    if !manifest.failed_ids.is_empty() {
        println!("failed ids: {}", manifest.failed_ids.join(", "));
    }
    if let Some(out) = &args.out {
        let preds = run_predictions(&store, &manifest.run_id).exit(INVALID)?;
        save_predictions(&preds, out).with_context(|| out.display().to_string()).exit(INVALID)?;
        println!("wrote {} predictions to {}", preds.len(), out.display());
    }
    if let Some(path) = &args.record_transcript {
        let entries = run_transcript(&store, &manifest.run_id, backend.params(), backend.system_message()).exit(INVALID)?;
        save_transcript(&entries, path).with_context(|| path.display().to_string()).exit(INVALID)?;
        println!("wrote {} transcript entries to {}", entries.len(), path.display());
    }
    Ok(())
}

fn load_source(source: &PredictionSource) -> Result<(String, Vec<Prediction>), Failure> {
    match (&source.predictions, &source.store, &source.run) {
        (Some(path), _, _) => {
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let preds = load_predictions(path).with_context(|| path.display().to_string()).exit(INVALID)?;
            Ok((name, preds))
        }
        (None, Some(store), Some(run)) => {
            let store = RunStore::open(store).exit(INVALID)?;
            let manifest = store.manifest(run).exit(INVALID)?;
            let preds = run_predictions(&store, run).exit(INVALID)?;
            Ok((manifest.backend.backend_id, preds))
        }
        _ => Err(fail(CONFIG, anyhow!("give --predictions or --store with --run"))),
    }
}

pub fn evaluate(args: EvaluateArgs) -> CmdResult {
    let samples = load_dataset(&args.data)?;
    let (default_name, preds) = load_source(&args.source)?;
    let report = evaluate_predictions(&samples, &preds).exit(INVALID)?;
    let name = args.name.unwrap_or(default_name);
    print!("{}", results_table(&[(name, &report)]));
    println!();
    print!("{}", detail_table(&report));
    if !report.by_entity_type.is_empty() {
        println!("\nentity type        F1^PN    F1^PN0      N/A%   scored");
        for (et, b) in &report.by_entity_type {
            println!("{:<14}{:>10.2}{:>10.2}{:>10.2}{:>9}", et.as_str(), b.f1_pn, b.f1_pn0, b.na_rate, b.scored);
        }
    }
    if let Some(path) = &args.json {
        let json = serde_json::to_string_pretty(&report).exit(INVALID)?;
        fs::write(path, json + "\n").with_context(|| path.display().to_string()).exit(INVALID)?;
    }
    Ok(())
}

pub fn report(cmd: ReportCommand) -> CmdResult {
    match cmd {
        ReportCommand::Disagreements { data, source, out } => {
            let samples = load_dataset(&data)?;
            let answers: HashMap<String, SystemAnswer> = match (&source.store, &source.run) {
                (Some(store), Some(run)) => {
                    let store = RunStore::open(store).exit(INVALID)?;
                    collect_records(&store, run)
                        .exit(INVALID)?
                        .into_iter()
                        .map(|r| (r.sample_id, SystemAnswer { label: r.extracted, hops: r.hops }))
                        .collect()
                }
                _ => load_source(&source)?
                    .1
                    .into_iter()
                    .map(|p| (p.id, SystemAnswer::label(p.pred)))
                    .collect(),
            };
            let set = mine_disagreements(&samples, &answers).exit(INVALID)?;
            print!("{}", disagreement_digest(&set.items));
            if set.missing > 0 {
                println!("{} sample(s) had no prediction", set.missing);
            }
            if let Some(out) = out {
                let file = File::create(&out).with_context(|| out.display().to_string()).exit(INVALID)?;
                write_disagreements(&set.items, file).exit(INVALID)?;
            }
            Ok(())
        }
        ReportCommand::Digest { input } => {
            let file = File::open(&input).with_context(|| input.display().to_string()).exit(INVALID)?;
            let items = read_disagreements(file).exit(INVALID)?;
            print!("{}", disagreement_digest(&items));
            Ok(())
        }
        ReportCommand::Cross { data, systems, min_wrong, out } => {
            let samples = load_dataset(&data)?;
            let mut sets = BTreeMap::new();
            for (name, path) in &systems {
                let preds = load_predictions(path).with_context(|| path.display().to_string()).exit(INVALID)?;
                sets.insert(name.clone(), preds.into_iter().map(|p| (p.id, p.pred)).collect::<HashMap<_, _>>());
            }
            let rows = cross_model_table(&sets, &samples).exit(INVALID)?;
            let kept = wrong_in_at_least(&rows, min_wrong);
            let names: Vec<&String> = sets.keys().collect();
            let mut line = format!("{:<12}{:<10}", "id", "gold");
            for n in &names {
                let _ = write!(line, "{n:<12}");
            }
            println!("{}agree", line);
            for r in &kept {
                let mut line = format!("{:<12}{:<10}", r.sample_id, r.gold.as_str());
                for n in &names {
                    let _ = write!(line, "{:<12}", r.predictions.get(*n).map(|l| l.as_str()).unwrap_or("-"));
                }
                println!("{line}{}", r.agree_count);
            }
            println!("{} of {} samples wrong in at least {min_wrong} system(s)", kept.len(), rows.len());
            if let Some(out) = out {
                let mut text = String::new();
                for r in &kept {
                    text.push_str(&serde_json::to_string(r).exit(INVALID)?);
                    text.push('\n');
                }
                fs::write(&out, text).with_context(|| out.display().to_string()).exit(INVALID)?;
            }
            Ok(())
        }
        ReportCommand::Curve { checkpoints, data, out } => {
            let dev = load_dataset(&data)?;
            let manifest = load_checkpoint_manifest(&checkpoints).exit(INVALID)?;
            let base = checkpoints.parent().unwrap_or(Path::new("."));
            let curve = checkpoint_curve(&manifest, base, &dev).exit(INVALID)?;
            print!("{}", curve.to_csv());
            println!("best epoch {} (F1^PN {:.2})", curve.best_epoch, curve.best_f1_pn);
            if let Some(out) = out {
                fs::write(&out, curve.to_csv()).with_context(|| out.display().to_string()).exit(INVALID)?;
            }
            Ok(())
        }
        ReportCommand::Table { evals } => {
            let mut reports = Vec::new();
            for (name, path) in evals {
                let text = fs::read_to_string(&path).with_context(|| path.display().to_string()).exit(INVALID)?;
                let report: EvalReport =
                    serde_json::from_str(&text).with_context(|| path.display().to_string()).exit(INVALID)?;
                reports.push((name, report));
            }
            let rows: Vec<(String, &EvalReport)> = reports.iter().map(|(n, r)| (n.clone(), r)).collect();
            print!("{}", results_table(&rows));
            Ok(())
        }
    }
}

pub fn transcript(cmd: TranscriptCommand) -> CmdResult {
    match cmd {
        TranscriptCommand::Export { store, run, backend, out } => {
            let config = BackendConfig::load(&backend).exit(CONFIG)?;
            let store = RunStore::open(&store).exit(INVALID)?;
            let manifest = store.manifest(&run).exit(INVALID)?;
            if manifest.backend.digest != config.digest() {
                return Err(fail(
                    CONFIG,
                    anyhow!("run {run} was produced by backend {:?} with different settings", manifest.backend.backend_id),
                ));
            }
            let entries = run_transcript(&store, &run, &config.params, config.system_message_text()).exit(INVALID)?;
            save_transcript(&entries, &out).with_context(|| out.display().to_string()).exit(INVALID)?;
            println!("wrote {} transcript entries to {}", entries.len(), out.display());
            Ok(())
        }
        TranscriptCommand::Inspect { path } => {
            let entries = load_transcript(&path).exit(INVALID)?;
            let mut by_finish: BTreeMap<&str, usize> = BTreeMap::new();
            for e in &entries {
                let name = match e.finish_reason {
                    FinishReason::Stop => "stop",
                    FinishReason::Length => "length",
                    FinishReason::Error => "error",
                };
                *by_finish.entry(name).or_default() += 1;
            }
            println!("{} entries", entries.len());
            for (name, n) in by_finish {
                println!("  {name}: {n}");
            }
            Ok(())
        }
    }
}

pub fn runs(store: &Path) -> CmdResult {
    let store = RunStore::open(store).exit(INVALID)?;
    for id in store.run_ids().exit(INVALID)? {
        let m = store.manifest(&id).exit(INVALID)?;
        let c = m.counts;
        println!(
            "{id}  {:<8} {:<8} {:<16} completed {} failed {} pending {}",
            m.mode.as_str(),
            m.prompt_spec_id,
            m.backend.backend_id,
            c.completed,
            c.failed,
            c.pending
        );
    }
    Ok(())
}
