//! Error-analysis exports.
//!
//! [`mine_disagreements`] lists every sample where a system's label differs
//! from gold, grouped by confusion cell. Each entry carries a free-form
//! `category` slot (e.g. "E1") that annotators fill in by editing the JSONL
//! export; [`read_disagreements`] loads the edited file back.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{self, BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Sample;
use crate::store::Hop;
use crate::types::{EntityType, Label};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("sample {0:?} has no gold label")]
    MissingGold(String),
    #[error("need at least two prediction sets, got {0}")]
    TooFewSystems(usize),
    #[error("predictions for ids not in the dataset: {}", .0.join(", "))]
    UnknownIds(Vec<String>),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

/// A system answer for one sample, optionally with its reasoning trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemAnswer {
    pub label: Label,
    pub hops: Vec<Hop>,
}

impl SystemAnswer {
    pub fn label(label: Label) -> Self {
        Self { label, hops: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub sample_id: String,
    pub sentence: String,
    pub target: String,
    pub entity_type: EntityType,
    pub gold: Label,
    pub pred: Label,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hops: Vec<Hop>,
    #[serde(default)]
    pub category: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DisagreementSet {
    pub items: Vec<Disagreement>,
    /// Samples that had no prediction at all.
    pub missing: usize,
}

/// One entry per sample whose (unk-folded) prediction differs from gold,
/// sorted by gold, prediction, entity type, then id.
pub fn mine_disagreements(
    samples: &[Sample],
    predictions: &HashMap<String, SystemAnswer>,
) -> Result<DisagreementSet, ReportError> {
    let mut out = DisagreementSet::default();
    for s in samples {
        let gold = s.gold.ok_or_else(|| ReportError::MissingGold(s.id.clone()))?;
        let Some(answer) = predictions.get(&s.id) else {
            out.missing += 1;
            continue;
        };
        let pred = answer.label.folded();
        if pred != gold {
            out.items.push(Disagreement {
                sample_id: s.id.clone(),
                sentence: s.sentence.clone(),
                target: s.target.clone(),
                entity_type: s.entity_type,
                gold,
                pred,
                hops: answer.hops.clone(),
                category: None,
            });
        }
    }
    out.items.sort_by(|a, b| {
        (a.gold, a.pred, a.entity_type, &a.sample_id).cmp(&(b.gold, b.pred, b.entity_type, &b.sample_id))
    });
    Ok(out)
}

pub fn write_disagreements<W: Write>(items: &[Disagreement], mut out: W) -> io::Result<()> {
    for d in items {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_disagreements<R: Read>(reader: R) -> Result<Vec<Disagreement>, ReportError> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| ReportError::Format { line: idx + 1, message: e.to_string() })?,
        );
    }
    Ok(out)
}

/// Human-readable digest grouped by confusion cell, with category tallies.
pub fn disagreement_digest(items: &[Disagreement]) -> String {
    let mut out = String::new();
    let mut cells: BTreeMap<(Label, Label), Vec<&Disagreement>> = BTreeMap::new();
    for d in items {
        cells.entry((d.gold, d.pred)).or_default().push(d);
    }
    let _ = writeln!(out, "{} disagreement(s)", items.len());
    for ((gold, pred), group) in &cells {
        let _ = writeln!(out, "\n== gold {gold} / predicted {pred}: {}", group.len());
        for d in group {
            let cat = d.category.as_deref().unwrap_or("-");
            let _ = writeln!(out, "[{}] {} ({}) {}", cat, d.sample_id, d.entity_type, d.target);
            let _ = writeln!(out, "    {}", d.sentence);
        }
    }
    let mut cats: BTreeMap<&str, usize> = BTreeMap::new();
    for d in items {
        *cats.entry(d.category.as_deref().unwrap_or("unannotated")).or_default() += 1;
    }
    let _ = writeln!(out, "\ncategories:");
    for (cat, n) in cats {
        let _ = writeln!(out, "  {cat}: {n}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CrossModelRow {
    pub sample_id: String,
    pub gold: Label,
    pub entity_type: EntityType,
    /// system id to predicted label, for systems that answered.
    pub predictions: BTreeMap<String, Label>,
    pub agree_count: usize,
    pub wrong_count: usize,
}

/// Per-sample view of several systems' answers against gold.
pub fn cross_model_table(
    pred_sets: &BTreeMap<String, HashMap<String, Label>>,
    samples: &[Sample],
) -> Result<Vec<CrossModelRow>, ReportError> {
    if pred_sets.len() < 2 {
        return Err(ReportError::TooFewSystems(pred_sets.len()));
    }
    let known: std::collections::HashSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    let mut unknown: Vec<String> = pred_sets
        .values()
        .flat_map(|m| m.keys())
        .filter(|id| !known.contains(id.as_str()))
        .cloned()
        .collect();
    unknown.sort();
    unknown.dedup();
    if !unknown.is_empty() {
        return Err(ReportError::UnknownIds(unknown));
    }
    samples
        .iter()
        .map(|s| {
            let gold = s.gold.ok_or_else(|| ReportError::MissingGold(s.id.clone()))?;
            let predictions: BTreeMap<String, Label> = pred_sets
                .iter()
                .filter_map(|(sys, preds)| preds.get(&s.id).map(|l| (sys.clone(), l.folded())))
                .collect();
            let agree_count = predictions.values().filter(|&&l| l == gold).count();
            Ok(CrossModelRow {
                sample_id: s.id.clone(),
                gold,
                entity_type: s.entity_type,
                wrong_count: predictions.len() - agree_count,
                agree_count,
                predictions,
            })
        })
        .collect()
}

/// Rows where at least `k` systems got the label wrong.
pub fn wrong_in_at_least(rows: &[CrossModelRow], k: usize) -> Vec<&CrossModelRow> {
    rows.iter().filter(|r| r.wrong_count >= k).collect()
}
