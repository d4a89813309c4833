//! Batch inference engine.
//!
//! Zero-shot mode sends one rendered question per sample and reads the label
//! with the ordered template check. Chain mode (THoR) sends four prompts per
//! sample in strict order (aspect, opinion, polarity, final label) and reads
//! the last answer by exact string match.
//!
//! Samples fan out to at most `max_in_flight` worker threads. Workers never
//! touch the store files; records and cache entries flow over a channel to
//! the calling thread, which is the single writer.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::backend::{request_key, Backend, BackendError, CompletionResult, FinishReason, GenerationParams, TranscriptEntry};
use crate::corpus::{dataset_digest, Sample};
use crate::digest::fields_digest;
use crate::extract::{extract_exact, extract_from_response};
use crate::predictions::Prediction;
use crate::prompts::{apply_brevity_suffix, PromptError, PromptSpec, ThorChainSpec};
use crate::store::{
    BackendSnapshot, Hop, InferenceRecord, Mode, RunCounts, RunManifest, RunStore, StoreError,
};
use crate::types::Label;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("run {} aborted: {error}", manifest.run_id)]
    Fatal { manifest: Box<RunManifest>, error: BackendError },
    #[error("max_in_flight must be at least 1")]
    NoWorkers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub max_in_flight: usize,
    /// Append the short-answer instruction to every prompt sent.
    pub brevity_suffix: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { max_in_flight: 4, brevity_suffix: false }
    }
}

#[derive(Clone, Copy)]
enum Task<'a> {
    ZeroShot(&'a PromptSpec),
    Thor(&'a ThorChainSpec),
}

impl Task<'_> {
    fn mode(&self) -> Mode {
        match self {
            Task::ZeroShot(_) => Mode::Zeroshot,
            Task::Thor(_) => Mode::Thor,
        }
    }

    fn spec_id(&self) -> String {
        match self {
            Task::ZeroShot(spec) => spec.id().to_string(),
            Task::Thor(chain) => chain.id(),
        }
    }

    /// Render-only dry run so language errors surface before any call.
    fn check(&self, sample: &Sample) -> Result<(), PromptError> {
        match self {
            Task::ZeroShot(spec) => spec.render(sample).map(drop),
            Task::Thor(chain) => chain.render_hop(1, sample, &[]).map(drop),
        }
    }
}

/// Deterministic id for a (dataset, mode, prompt, backend) combination.
pub fn run_id(dataset_digest: &str, mode: Mode, prompt_spec_id: &str, backend_digest: &str) -> String {
    let full = fields_digest([
        dataset_digest.as_bytes(),
        mode.as_str().as_bytes(),
        prompt_spec_id.as_bytes(),
        backend_digest.as_bytes(),
    ]);
    full[..16].to_string()
}

fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

enum Event {
    Cached(TranscriptEntry),
    Done(InferenceRecord),
    Failed(String, BackendError),
}

struct Worker<'a> {
    task: Task<'a>,
    backend: &'a dyn Backend,
    digest: &'a str,
    options: RunOptions,
    cache: &'a RwLock<HashMap<String, (String, FinishReason)>>,
    events: mpsc::Sender<Event>,
}

impl Worker<'_> {
    /// One backend exchange, answered from the response cache when possible.
    fn call(&self, rendered: String) -> Result<Hop, BackendError> {
        let prompt = if self.options.brevity_suffix { apply_brevity_suffix(&rendered) } else { rendered };
        let key = self.backend.request_key(&prompt);
        if let Some((text, _)) = self.cache.read().expect("poisoned").get(&key) {
            return Ok(Hop { prompt, response: text.clone() });
        }
        let CompletionResult { text, finish_reason, .. } = self.backend.complete(&prompt)?;
        self.cache.write().expect("poisoned").insert(key.clone(), (text.clone(), finish_reason));
        let _ = self.events.send(Event::Cached(TranscriptEntry {
            key,
            prompt: prompt.clone(),
            text: text.clone(),
            finish_reason,
        }));
        Ok(Hop { prompt, response: text })
    }

    fn process(&self, sample: &Sample) -> Result<InferenceRecord, BackendError> {
        let render_err = |e: PromptError| BackendError::Config(e.to_string());
        let (hops, extracted) = match self.task {
            Task::ZeroShot(spec) => {
                let hop = self.call(spec.render(sample).map_err(render_err)?)?;
                let label = extract_from_response(&hop.response, &hop.prompt, spec.answer_templates());
                (vec![hop], label)
            }
            Task::Thor(chain) => {
                let mut outputs: Vec<String> = Vec::with_capacity(3);
                let mut hops = Vec::with_capacity(4);
                for k in 1..=3 {
                    let hop = self.call(chain.render_hop(k, sample, &outputs).map_err(render_err)?)?;
                    outputs.push(hop.response.clone());
                    hops.push(hop);
                }
                let fin = self.call(chain.render_final(sample, &outputs).map_err(render_err)?)?;
                let label = extract_exact(&fin.response, chain.label_strings());
                hops.push(fin);
                (hops, label)
            }
        };
        Ok(InferenceRecord {
            sample_id: sample.id.clone(),
            mode: self.task.mode(),
            prompt_spec_id: self.task.spec_id(),
            backend_digest: self.digest.to_string(),
            hops,
            extracted,
            unk: extracted == Label::Unk,
            ts: now_millis(),
        })
    }
}

/// Zero-shot inference over `samples`; resumes from whatever `store` holds.
pub fn run_zeroshot(
    samples: &[Sample],
    spec: &PromptSpec,
    backend: &dyn Backend,
    store: &RunStore,
    options: RunOptions,
) -> Result<RunManifest, ChainError> {
    run(samples, Task::ZeroShot(spec), backend, store, options)
}

/// Three-hop chain inference plus the final label prompt.
pub fn run_thor(
    samples: &[Sample],
    chain: &ThorChainSpec,
    backend: &dyn Backend,
    store: &RunStore,
    options: RunOptions,
) -> Result<RunManifest, ChainError> {
    run(samples, Task::Thor(chain), backend, store, options)
}

fn run(
    samples: &[Sample],
    task: Task<'_>,
    backend: &dyn Backend,
    store: &RunStore,
    options: RunOptions,
) -> Result<RunManifest, ChainError> {
    if options.max_in_flight == 0 {
        return Err(ChainError::NoWorkers);
    }
    for sample in samples {
        task.check(sample)?;
    }

    let mode = task.mode();
    let spec_id = task.spec_id();
    let digest = backend.digest();
    let dataset = dataset_digest(samples);
    let params = backend.params();
    let mut manifest = RunManifest {
        run_id: run_id(&dataset, mode, &spec_id, &digest),
        dataset_digest: dataset,
        mode,
        prompt_spec_id: spec_id.clone(),
        backend: BackendSnapshot {
            backend_id: backend.backend_id().to_string(),
            digest: digest.clone(),
            model_id: params.model_id.clone(),
            temperature: params.temperature,
            max_response_tokens: params.max_response_tokens,
            system_message: backend.system_message().is_some(),
            brevity_suffix: options.brevity_suffix,
        },
        counts: RunCounts::default(),
        sample_ids: samples.iter().map(|s| s.id.clone()).collect(),
        failed_ids: Vec::new(),
    };

    let done: HashSet<String> = store
        .records()?
        .into_iter()
        .filter(|r| r.mode == mode && r.prompt_spec_id == spec_id && r.backend_digest == digest)
        .map(|r| r.sample_id)
        .collect();
    let todo: Vec<&Sample> = samples.iter().filter(|s| !done.contains(&s.id)).collect();
    let already = samples.len() - todo.len();
    log::info!("run {}: {} cached, {} to process", manifest.run_id, already, todo.len());

    let cache = RwLock::new(store.cache()?);
    let mut record_log = store.record_writer()?;
    let mut cache_log = store.cache_writer()?;
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<Event>();

    let mut completed = already;
    let mut failed_ids = Vec::new();
    let mut fatal: Option<BackendError> = None;
    let mut io_error: Option<std::io::Error> = None;

    std::thread::scope(|scope| {
        for _ in 0..options.max_in_flight.min(todo.len()) {
            let worker = Worker {
                task,
                backend,
                digest: &digest,
                options,
                cache: &cache,
                events: tx.clone(),
            };
            let (todo, next, abort) = (&todo, &next, &abort);
            scope.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(sample) = todo.get(i) else { break };
                let event = match worker.process(sample) {
                    Ok(record) => Event::Done(record),
                    Err(e) => {
                        if e.is_fatal() {
                            abort.store(true, Ordering::SeqCst);
                        }
                        Event::Failed(sample.id.clone(), e)
                    }
                };
                if worker.events.send(event).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        for event in rx {
            let written = match event {
                Event::Cached(entry) => cache_log.append(&entry),
                Event::Done(record) => {
                    completed += 1;
                    record_log.append(&record)
                }
                Event::Failed(id, error) => {
                    log::warn!("sample {id} failed: {error}");
                    if error.is_fatal() && fatal.is_none() {
                        fatal = Some(error);
                    }
                    failed_ids.push(id);
                    Ok(())
                }
            };
            if let Err(e) = written {
                abort.store(true, Ordering::SeqCst);
                io_error.get_or_insert(e);
            }
        }
    });

    record_log.sync().map_err(StoreError::from)?;
    cache_log.sync().map_err(StoreError::from)?;
    if let Some(e) = io_error {
        return Err(StoreError::from(e).into());
    }

    failed_ids.sort();
    manifest.counts = RunCounts {
        completed,
        failed: failed_ids.len(),
        pending: samples.len() - completed - failed_ids.len(),
    };
    manifest.failed_ids = failed_ids;
    store.write_manifest(&manifest)?;

    match fatal {
        Some(error) => Err(ChainError::Fatal { manifest: Box::new(manifest), error }),
        None => Ok(manifest),
    }
}

/// Completed records of a run, in the run's sample order.
pub fn collect_records(store: &RunStore, run_id: &str) -> Result<Vec<InferenceRecord>, StoreError> {
    let manifest = store.manifest(run_id)?;
    let mut by_id: HashMap<String, InferenceRecord> = HashMap::new();
    for r in store.records()? {
        if r.mode == manifest.mode
            && r.prompt_spec_id == manifest.prompt_spec_id
            && r.backend_digest == manifest.backend.digest
        {
            by_id.entry(r.sample_id.clone()).or_insert(r);
        }
    }
    Ok(manifest.sample_ids.iter().filter_map(|id| by_id.remove(id)).collect())
}

/// `(sample_id, label, unk)` per completed record, with unanswered folded to
/// neutral.
pub fn collect_predictions(store: &RunStore, run_id: &str) -> Result<Vec<(String, Label, bool)>, StoreError> {
    Ok(collect_records(store, run_id)?
        .into_iter()
        .map(|r| (r.sample_id, r.extracted.folded(), r.extracted == Label::Unk))
        .collect())
}

/// Same as [`collect_predictions`] in prediction-file form.
pub fn run_predictions(store: &RunStore, run_id: &str) -> Result<Vec<Prediction>, StoreError> {
    Ok(collect_predictions(store, run_id)?
        .into_iter()
        .map(|(id, pred, unk)| Prediction { id, pred, unk })
        .collect())
}

/// Transcript of every exchange behind a run's completed records, keyed for
/// the given parameterisation. Answers come from the response cache; a hop
/// missing from it is rebuilt from the record with a `stop` finish.
pub fn run_transcript(
    store: &RunStore,
    run_id: &str,
    params: &GenerationParams,
    system_message: Option<&str>,
) -> Result<Vec<TranscriptEntry>, StoreError> {
    let cache: HashMap<String, TranscriptEntry> =
        store.cache_entries()?.into_iter().map(|e| (e.key.clone(), e)).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in collect_records(store, run_id)? {
        for hop in record.hops {
            let key = request_key(params, system_message, &hop.prompt);
            if !seen.insert(key.clone()) {
                continue;
            }
            out.push(cache.get(&key).cloned().unwrap_or(TranscriptEntry {
                key,
                prompt: hop.prompt,
                text: hop.response,
                finish_reason: FinishReason::Stop,
            }));
        }
    }
    Ok(out)
}
