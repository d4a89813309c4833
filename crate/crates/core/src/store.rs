//! On-disk run store.
//!
//! ```text
//! <dir>/records.jsonl     one InferenceRecord per processed sample (append-only)
//! <dir>/cache.jsonl       every successful backend exchange, transcript format
//! <dir>/runs/<id>.json    one manifest per run
//! ```
//!
//! Resumption scans both logs. A torn final line (crash mid-write) is
//! skipped with a warning; every other malformed line is an error.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{FinishReason, TranscriptEntry};
use crate::types::Label;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("run store i/o: {0}")]
    Io(#[from] io::Error),
    #[error("{path}:{line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error("no run {0:?} in this store")]
    UnknownRun(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Zeroshot,
    Thor,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Zeroshot => "zeroshot",
            Mode::Thor => "thor",
        }
    }

    /// Backend calls per freshly processed sample.
    pub fn calls_per_sample(self) -> usize {
        match self {
            Mode::Zeroshot => 1,
            Mode::Thor => 4,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zeroshot" | "zero-shot" => Ok(Mode::Zeroshot),
            "thor" => Ok(Mode::Thor),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub prompt: String,
    pub response: String,
}

/// Full trace of one sample's inference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub sample_id: String,
    pub mode: Mode,
    pub prompt_spec_id: String,
    pub backend_digest: String,
    /// One hop for zero-shot; aspect, opinion, polarity and final label for
    /// the reasoning chain.
    pub hops: Vec<Hop>,
    pub extracted: Label,
    pub unk: bool,
    /// Unix milliseconds.
    pub ts: u64,
}

impl InferenceRecord {
    pub fn is_well_formed(&self) -> bool {
        self.hops.len() == self.mode.calls_per_sample() && self.unk == (self.extracted == Label::Unk)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub completed: usize,
    pub pending: usize,
    pub failed: usize,
}

/// Redacted description of the backend a run used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSnapshot {
    pub backend_id: String,
    pub digest: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_response_tokens: u32,
    pub system_message: bool,
    pub brevity_suffix: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub dataset_digest: String,
    pub mode: Mode,
    pub prompt_spec_id: String,
    pub backend: BackendSnapshot,
    pub counts: RunCounts,
    pub sample_ids: Vec<String>,
    #[serde(default)]
    pub failed_ids: Vec<String>,
}

impl RunManifest {
    pub fn dataset_size(&self) -> usize {
        self.sample_ids.len()
    }
}

pub struct RunStore {
    dir: PathBuf,
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let lines: Vec<String> = BufReader::new(File::open(path)?).lines().collect::<Result<_, _>>()?;
    let last = lines.len();
    let mut out = Vec::with_capacity(lines.len());
    for (idx, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(e) if idx + 1 == last => {
                log::warn!("{}: skipping torn final line: {e}", path.display());
            }
            Err(e) => {
                return Err(StoreError::Corrupt {
                    path: path.display().to_string(),
                    line: idx + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Appends whole lines to one of the store logs.
pub struct LogWriter {
    file: io::BufWriter<File>,
}

impl LogWriter {
    fn open(path: &Path) -> io::Result<LogWriter> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(LogWriter { file: io::BufWriter::new(file) })
    }

    pub fn append<T: Serialize>(&mut self, value: &T) -> io::Result<()> {
        let mut line = serde_json::to_vec(value)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()
    }

    pub fn sync(&mut self) -> io::Result<()> {
        self.file.flush()?;
        self.file.get_ref().sync_all()
    }
}

impl RunStore {
    pub fn open(dir: &Path) -> Result<RunStore, StoreError> {
        fs::create_dir_all(dir.join("runs"))?;
        Ok(RunStore { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn records_path(&self) -> PathBuf {
        self.dir.join("records.jsonl")
    }

    pub fn cache_path(&self) -> PathBuf {
        self.dir.join("cache.jsonl")
    }

    fn manifest_path(&self, run_id: &str) -> PathBuf {
        self.dir.join("runs").join(format!("{run_id}.json"))
    }

    pub fn records(&self) -> Result<Vec<InferenceRecord>, StoreError> {
        read_jsonl(&self.records_path())
    }

    pub fn cache_entries(&self) -> Result<Vec<TranscriptEntry>, StoreError> {
        read_jsonl(&self.cache_path())
    }

    pub fn cache(&self) -> Result<HashMap<String, (String, FinishReason)>, StoreError> {
        let mut map = HashMap::new();
        for e in self.cache_entries()? {
            map.entry(e.key).or_insert((e.text, e.finish_reason));
        }
        Ok(map)
    }

    pub fn record_writer(&self) -> Result<LogWriter, StoreError> {
        Ok(LogWriter::open(&self.records_path())?)
    }

    pub fn cache_writer(&self) -> Result<LogWriter, StoreError> {
        Ok(LogWriter::open(&self.cache_path())?)
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<(), StoreError> {
        let path = self.manifest_path(&manifest.run_id);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(manifest).map_err(io::Error::from)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn manifest(&self, run_id: &str) -> Result<RunManifest, StoreError> {
        let path = self.manifest_path(run_id);
        if !path.exists() {
            return Err(StoreError::UnknownRun(run_id.to_string()));
        }
        let bytes = fs::read(&path)?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn run_ids(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.dir.join("runs"))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}
