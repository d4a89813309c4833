//! Recorded transcripts and the backend that replays them.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{request_key, Backend, BackendConfig, BackendError, CompletionResult, FinishReason, GenerationParams};

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub key: String,
    pub prompt: String,
    pub text: String,
    pub finish_reason: FinishReason,
}

fn io_err(e: impl std::fmt::Display) -> BackendError {
    BackendError::Config(format!("transcript: {e}"))
}

pub fn read_transcript<R: Read>(reader: R) -> Result<Vec<TranscriptEntry>, BackendError> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TranscriptEntry =
            serde_json::from_str(&line).map_err(|e| io_err(format!("line {}: {e}", idx + 1)))?;
        out.push(entry);
    }
    Ok(out)
}

pub fn load_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, BackendError> {
    let file = File::open(path).map_err(|e| io_err(format!("{}: {e}", path.display())))?;
    read_transcript(file)
}

/// Write transcript entries as JSONL, one per line, in the given order.
pub fn save_transcript(entries: &[TranscriptEntry], path: &Path) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for entry in entries {
        serde_json::to_writer(&mut out, entry)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Write `(prompt, result)` events as transcript JSONL keyed under the given
/// parameterisation. Equal prompts share one key; the first result is kept.
pub fn record_transcript<'a, I>(
    events: I,
    params: &GenerationParams,
    system_message: Option<&str>,
    path: &Path,
) -> std::io::Result<usize>
where
    I: IntoIterator<Item = (&'a str, &'a CompletionResult)>,
{
    let mut out = BufWriter::new(File::create(path)?);
    let mut seen = HashSet::new();
    for (prompt, result) in events {
        let key = request_key(params, system_message, prompt);
        if !seen.insert(key.clone()) {
            continue;
        }
        let entry = TranscriptEntry {
            key,
            prompt: prompt.to_string(),
            text: result.text.clone(),
            finish_reason: result.finish_reason,
        };
        serde_json::to_writer(&mut out, &entry)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(seen.len())
}

/// Deterministic backend answering from a transcript.
pub struct ReplayBackend {
    backend_id: String,
    params: GenerationParams,
    system_message: Option<String>,
    table: HashMap<String, (String, FinishReason)>,
    calls: AtomicU64,
}

impl ReplayBackend {
    pub fn new(
        backend_id: &str,
        params: GenerationParams,
        system_message: Option<&str>,
        entries: Vec<TranscriptEntry>,
    ) -> ReplayBackend {
        let mut table = HashMap::with_capacity(entries.len());
        for e in entries {
            table.entry(e.key).or_insert((e.text, e.finish_reason));
        }
        ReplayBackend {
            backend_id: backend_id.to_string(),
            params,
            system_message: system_message.map(str::to_string),
            table,
            calls: AtomicU64::new(0),
        }
    }

    /// Script answers directly by prompt text.
    pub fn scripted<'a, I>(backend_id: &str, params: GenerationParams, system_message: Option<&str>, pairs: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let entries = pairs
            .into_iter()
            .map(|(prompt, text)| TranscriptEntry {
                key: request_key(&params, system_message, prompt),
                prompt: prompt.to_string(),
                text: text.to_string(),
                finish_reason: FinishReason::Stop,
            })
            .collect();
        Self::new(backend_id, params, system_message, entries)
    }

    pub fn from_config(config: &BackendConfig) -> Result<ReplayBackend, BackendError> {
        let path = config
            .transcript
            .as_deref()
            .ok_or_else(|| BackendError::Config("replay backend needs a transcript path".into()))?;
        let entries = load_transcript(path)?;
        Ok(Self::new(&config.backend_id, config.params.clone(), config.system_message_text(), entries))
    }

    /// Number of `complete` calls served so far (hits and misses).
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn params(&self) -> &GenerationParams {
        &self.params
    }

    fn system_message(&self) -> Option<&str> {
        self.system_message.as_deref()
    }

    fn complete(&self, prompt: &str) -> Result<CompletionResult, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let key = self.request_key(prompt);
        match self.table.get(&key) {
            Some((text, finish)) => Ok(CompletionResult {
                text: text.clone(),
                finish_reason: *finish,
                latency: Duration::ZERO,
            }),
            None => Err(BackendError::Protocol(format!("prompt {} is not in the transcript", &key[..12]))),
        }
    }
}

/// Pass-through backend that remembers every successful exchange.
pub struct RecordingBackend<B> {
    inner: B,
    events: Mutex<Vec<(String, CompletionResult)>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Arc<Self> {
        Arc::new(Self { inner, events: Mutex::new(Vec::new()) })
    }

    pub fn events(&self) -> Vec<(String, CompletionResult)> {
        self.events.lock().expect("poisoned").clone()
    }

    pub fn write_transcript(&self, path: &Path) -> std::io::Result<usize> {
        let events = self.events();
        record_transcript(
            events.iter().map(|(p, r)| (p.as_str(), r)),
            self.inner.params(),
            self.inner.system_message(),
            path,
        )
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }

    fn params(&self) -> &GenerationParams {
        self.inner.params()
    }

    fn system_message(&self) -> Option<&str> {
        self.inner.system_message()
    }

    fn complete(&self, prompt: &str) -> Result<CompletionResult, BackendError> {
        let result = self.inner.complete(prompt)?;
        self.events.lock().expect("poisoned").push((prompt.to_string(), result.clone()));
        Ok(result)
    }
}
