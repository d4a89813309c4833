//! Prediction files: JSONL with `id`, `pred` and `unk` per line.
//!
//! The same format is written by `infer --out` and by external trainers, and
//! is what `evaluate` scores against a gold dataset.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Sample;
use crate::metrics::{epoch_curve_from_scores, score_by_entity, EpochCurve, EvalReport, MetricsError, ScoredPair};
use crate::types::Label;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub pred: Label,
    pub unk: bool,
}

impl Prediction {
    /// Folds `Unk` into neutral with the flag set.
    pub fn from_extracted(id: impl Into<String>, extracted: Label) -> Prediction {
        Prediction { id: id.into(), pred: extracted.folded(), unk: extracted == Label::Unk }
    }
}

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("duplicate prediction for id {0:?}")]
    DuplicateId(String),
    #[error("predictions for ids not in the gold set: {}", .0.join(", "))]
    UnknownIds(Vec<String>),
    #[error("sample {0:?} has no gold label")]
    MissingGold(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<Prediction>, PredictionError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(&line)
            .map_err(|e| PredictionError::Format { line: idx + 1, message: e.to_string() })?;
        if !seen.insert(p.id.clone()) {
            return Err(PredictionError::DuplicateId(p.id));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>, PredictionError> {
    read_predictions(File::open(path)?)
}

pub fn write_predictions<W: Write>(predictions: &[Prediction], out: W) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    for p in predictions {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_predictions(predictions: &[Prediction], path: &Path) -> io::Result<()> {
    write_predictions(predictions, File::create(path)?)
}

/// Join predictions to gold samples by id and score them.
///
/// Predictions for unknown ids are an error. Gold samples without a
/// prediction are counted in `failed_count` and left out of every score.
pub fn evaluate_predictions(samples: &[Sample], predictions: &[Prediction]) -> Result<EvalReport, PredictionError> {
    let by_id: BTreeMap<&str, &Prediction> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let known: HashSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    let unknown: Vec<String> = by_id.keys().filter(|id| !known.contains(*id)).map(|id| id.to_string()).collect();
    if !unknown.is_empty() {
        return Err(PredictionError::UnknownIds(unknown));
    }
    let mut items = Vec::with_capacity(samples.len());
    let mut failed = 0u64;
    for sample in samples {
        let gold = sample.gold.ok_or_else(|| PredictionError::MissingGold(sample.id.clone()))?;
        match by_id.get(sample.id.as_str()) {
            Some(p) => items.push((sample.entity_type, ScoredPair::new(gold, p.pred, p.unk))),
            None => failed += 1,
        }
    }
    let mut report = score_by_entity(items)?;
    report.failed_count = failed;
    Ok(report)
}

/// Per-epoch checkpoint list written by a fine-tuning run.
///
/// ```json
/// {"checkpoints": [{"epoch": 1, "path": "ckpt/epoch-1", "predictions": "dev-1.jsonl"},
///                  {"epoch": 2, "dev_f1_pn": 61.2}]}
/// ```
///
/// An entry is scored from its `predictions` file when it has one (paths are
/// relative to the manifest); otherwise its reported `dev_f1_pn` is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_f1_pn: Option<f64>,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint manifest: {0}")]
    Format(String),
    #[error("epoch {0} has neither a predictions file nor dev_f1_pn")]
    NoScore(u32),
    #[error("epoch {epoch}: {source}")]
    Predictions { epoch: u32, source: PredictionError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub fn load_checkpoint_manifest(path: &Path) -> Result<CheckpointManifest, CheckpointError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CheckpointError::Format(e.to_string()))
}

/// Dev F1^PN per epoch, scoring prediction files against `dev` where given.
pub fn checkpoint_curve(
    manifest: &CheckpointManifest,
    base_dir: &Path,
    dev: &[Sample],
) -> Result<EpochCurve, CheckpointError> {
    let mut scores = Vec::with_capacity(manifest.checkpoints.len());
    for c in &manifest.checkpoints {
        let f1 = match (&c.predictions, c.dev_f1_pn) {
            (Some(file), _) => {
                let wrap = |source| CheckpointError::Predictions { epoch: c.epoch, source };
                let preds = load_predictions(&base_dir.join(file)).map_err(wrap)?;
                evaluate_predictions(dev, &preds).map_err(wrap)?.f1_pn
            }
            (None, Some(f1)) => f1,
            (None, None) => return Err(CheckpointError::NoScore(c.epoch)),
        };
        scores.push((c.epoch, f1));
    }
    Ok(epoch_curve_from_scores(&scores)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{EntityType, Lang, Split};

    fn sample(id: &str, gold: Label) -> Sample {
        Sample {
            id: id.into(),
            sentence: "s".into(),
            target: "t".into(),
            entity_type: EntityType::Person,
            gold: Some(gold),
            lang: Lang::En,
            split: Split::Test,
        }
    }

    #[test]
    fn line_format() {
        let p = Prediction::from_extracted("3", Label::Neutral);
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"id":"3","pred":"neutral","unk":false}"#);
        let u = Prediction::from_extracted("4", Label::Unk);
        assert_eq!(serde_json::to_string(&u).unwrap(), r#"{"id":"4","pred":"neutral","unk":true}"#);
    }

    #[test]
    fn unknown_ids_are_listed() {
        let preds = vec![
            Prediction::from_extracted("1", Label::Positive),
            Prediction::from_extracted("x", Label::Positive),
            Prediction::from_extracted("y", Label::Positive),
        ];
        let err = evaluate_predictions(&[sample("1", Label::Positive)], &preds).unwrap_err();
        assert_eq!(err.to_string(), "predictions for ids not in the gold set: x, y");
    }

    #[test]
    fn missing_predictions_count_as_failed() {
        let samples = [sample("1", Label::Positive), sample("2", Label::Negative)];
        let preds = [Prediction::from_extracted("1", Label::Positive)];
        let r = evaluate_predictions(&samples, &preds).unwrap();
        assert_eq!(r.failed_count, 1);
        assert_eq!(r.scored, 1);
    }

    #[test]
    fn malformed_lines() {
        let err = read_predictions("{\"id\":\"1\",\"pred\":\"good\",\"unk\":false}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, PredictionError::Format { line: 1, .. }));
        let dup = "{\"id\":\"1\",\"pred\":\"neutral\",\"unk\":false}\n{\"id\":\"1\",\"pred\":\"neutral\",\"unk\":false}\n";
        assert!(matches!(read_predictions(dup.as_bytes()), Err(PredictionError::DuplicateId(_))));
    }
}
