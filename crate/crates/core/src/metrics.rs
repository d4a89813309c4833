//! Scoring: confusion matrix, per-class precision/recall/F1 and the two
//! macro averages used for targeted sentiment evaluation.
//!
//! * `f1_pn`  = 100 · mean(F1(positive), F1(negative))
//! * `f1_pn0` = 100 · mean(F1(positive), F1(negative), F1(neutral))
//!
//! Averaging is corpus-level. A zero denominator in P, R or F1 yields 0.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{EntityType, Label};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricsError {
    #[error("nothing to score")]
    EmptyInput,
    #[error("gold label must be one of positive/negative/neutral, got {0}")]
    InvalidGold(Label),
    #[error("epochs must be strictly increasing ({prev} then {next})")]
    UnsortedEpochs { prev: u32, next: u32 },
    #[error("rate {0} is outside [0, 100]")]
    RateOutOfRange(f64),
}

/// One scored item. `unk` marks an answer that matched no class template;
/// its `pred` should already be folded to neutral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoredPair {
    pub gold: Label,
    pub pred: Label,
    pub unk: bool,
}

impl ScoredPair {
    pub fn new(gold: Label, pred: Label, unk: bool) -> Self {
        Self { gold, pred, unk }
    }
}

/// Counts indexed `[gold][pred]` over positive, negative, neutral.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub cells: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn add(&mut self, gold: Label, pred: Label) {
        if let (Some(g), Some(p)) = (gold.class_index(), pred.class_index()) {
            self.cells[g][p] += 1;
        }
    }

    pub fn get(&self, gold: Label, pred: Label) -> u64 {
        match (gold.class_index(), pred.class_index()) {
            (Some(g), Some(p)) => self.cells[g][p],
            _ => 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn gold_count(&self, label: Label) -> u64 {
        label.class_index().map_or(0, |g| self.cells[g].iter().sum())
    }

    pub fn pred_count(&self, label: Label) -> u64 {
        label.class_index().map_or(0, |p| self.cells.iter().map(|row| row[p]).sum())
    }

    pub fn class_scores(&self, label: Label) -> ClassScores {
        let Some(i) = label.class_index() else {
            return ClassScores::default();
        };
        let tp = self.cells[i][i];
        let fp = self.pred_count(label) - tp;
        let fn_ = self.gold_count(label) - tp;
        ClassScores::from_counts(tp, fp, fn_)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl ClassScores {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> ClassScores {
        let (tp_f, fp_f, fn_f) = (tp as f64, fp as f64, fn_ as f64);
        let precision = ratio(tp_f, tp_f + fp_f);
        let recall = ratio(tp_f, tp_f + fn_f);
        let f1 = ratio(2.0 * precision * recall, precision + recall);
        ClassScores { precision, recall, f1, support: tp + fn_ }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f1_pn: f64,
    pub f1_pn0: f64,
    pub positive: ClassScores,
    pub negative: ClassScores,
    pub neutral: ClassScores,
    /// Percentage of scored answers that matched no class.
    pub na_rate: f64,
    pub scored: u64,
    pub unk_count: u64,
    /// Samples that never produced an answer; not part of any score.
    pub failed_count: u64,
    pub matrix: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_entity_type: BTreeMap<EntityType, EntityBreakdown>,
}

/// Headline numbers for one entity type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityBreakdown {
    pub f1_pn: f64,
    pub f1_pn0: f64,
    pub na_rate: f64,
    pub scored: u64,
}

impl EvalReport {
    pub fn class(&self, label: Label) -> ClassScores {
        match label {
            Label::Positive => self.positive,
            Label::Negative => self.negative,
            Label::Neutral => self.neutral,
            Label::Unk => ClassScores::default(),
        }
    }
}

/// Score gold/prediction pairs. A `pred` of `Unk` is folded to neutral and
/// counted as unanswered.
pub fn score<I>(pairs: I) -> Result<EvalReport, MetricsError>
where
    I: IntoIterator<Item = ScoredPair>,
{
    let mut matrix = ConfusionMatrix::default();
    let mut unk_count = 0u64;
    for pair in pairs {
        if !pair.gold.is_class() {
            return Err(MetricsError::InvalidGold(pair.gold));
        }
        let unk = pair.unk || pair.pred == Label::Unk;
        if unk {
            unk_count += 1;
        }
        matrix.add(pair.gold, pair.pred.folded());
    }
    let scored = matrix.total();
    if scored == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let positive = matrix.class_scores(Label::Positive);
    let negative = matrix.class_scores(Label::Negative);
    let neutral = matrix.class_scores(Label::Neutral);
    Ok(EvalReport {
        f1_pn: 100.0 * (positive.f1 + negative.f1) / 2.0,
        f1_pn0: 100.0 * (positive.f1 + negative.f1 + neutral.f1) / 3.0,
        positive,
        negative,
        neutral,
        na_rate: 100.0 * unk_count as f64 / scored as f64,
        scored,
        unk_count,
        failed_count: 0,
        matrix,
        by_entity_type: BTreeMap::new(),
    })
}

/// [`score`] plus a per-entity-type breakdown.
pub fn score_by_entity<I>(items: I) -> Result<EvalReport, MetricsError>
where
    I: IntoIterator<Item = (EntityType, ScoredPair)>,
{
    let items: Vec<(EntityType, ScoredPair)> = items.into_iter().collect();
    let mut report = score(items.iter().map(|(_, p)| *p))?;
    let mut groups: BTreeMap<EntityType, Vec<ScoredPair>> = BTreeMap::new();
    for (et, pair) in items {
        groups.entry(et).or_default().push(pair);
    }
    for (et, pairs) in groups {
        let r = score(pairs)?;
        report.by_entity_type.insert(
            et,
            EntityBreakdown { f1_pn: r.f1_pn, f1_pn0: r.f1_pn0, na_rate: r.na_rate, scored: r.scored },
        );
    }
    Ok(report)
}

/// N/A column cell: a middle dot when at most 1% of answers were
/// unmatched, otherwise the rate to two decimals.
pub fn na_cell_format(na_rate: f64) -> Result<String, MetricsError> {
    if !(0.0..=100.0).contains(&na_rate) {
        return Err(MetricsError::RateOutOfRange(na_rate));
    }
    Ok(if na_rate <= 1.0 { "·".to_string() } else { format!("{na_rate:.2}") })
}

/// Dev-set F1^PN per epoch and the selected checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochCurve {
    pub rows: Vec<(u32, f64)>,
    pub best_epoch: u32,
    pub best_f1_pn: f64,
}

impl EpochCurve {
    /// `epoch,f1_pn` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,f1_pn\n");
        for (epoch, f1) in &self.rows {
            let _ = writeln!(out, "{epoch},{f1}");
        }
        out
    }
}

/// Pick the epoch with the highest F1^PN; the earlier epoch wins ties.
pub fn epoch_curve_from_scores(scores: &[(u32, f64)]) -> Result<EpochCurve, MetricsError> {
    let (first_epoch, first_f1) = *scores.first().ok_or(MetricsError::EmptyInput)?;
    for w in scores.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(MetricsError::UnsortedEpochs { prev: w[0].0, next: w[1].0 });
        }
    }
    let (best_epoch, best_f1_pn) = scores
        .iter()
        .skip(1)
        .fold((first_epoch, first_f1), |best, &(e, f)| if f > best.1 { (e, f) } else { best });
    Ok(EpochCurve { rows: scores.to_vec(), best_epoch, best_f1_pn })
}

pub fn epoch_curve(reports: &[(u32, EvalReport)]) -> Result<EpochCurve, MetricsError> {
    let scores: Vec<(u32, f64)> = reports.iter().map(|(e, r)| (*e, r.f1_pn)).collect();
    epoch_curve_from_scores(&scores)
}

/// Results table with columns F1^PN, F1^PN0, N/A%, one row per system.
pub fn results_table(rows: &[(String, &EvalReport)]) -> String {
    let header = ["Model", "F1^PN", "F1^PN0", "N/A%"];
    let mut cells: Vec<[String; 4]> = vec![header.map(String::from)];
    for (name, report) in rows {
        cells.push([
            name.clone(),
            format!("{:.2}", report.f1_pn),
            format!("{:.2}", report.f1_pn0),
            na_cell_format(report.na_rate.clamp(0.0, 100.0)).unwrap_or_default(),
        ]);
    }
    let widths: Vec<usize> = (0..4)
        .map(|c| cells.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in cells.iter().enumerate() {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            let pad = widths[c] - cell.chars().count();
            if c == 0 {
                line.push_str(cell);
                line.push_str(&" ".repeat(pad));
            } else {
                line.push_str("  ");
                line.push_str(&" ".repeat(pad));
                line.push_str(cell);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 6));
            out.push('\n');
        }
    }
    out
}

/// Confusion matrix and per-class scores as text.
pub fn detail_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "gold \\ pred     positive  negative   neutral");
    for gold in Label::CLASSES {
        let _ = write!(out, "{:<14}", gold.as_str());
        for pred in Label::CLASSES {
            let _ = write!(out, "{:>10}", report.matrix.get(gold, pred));
        }
        out.push('\n');
    }
    out.push('\n');
    let _ = writeln!(out, "class          precision    recall        F1   support");
    for label in Label::CLASSES {
        let s = report.class(label);
        let _ = writeln!(
            out,
            "{:<14}{:>10.4}{:>10.4}{:>10.4}{:>10}",
            label.as_str(),
            s.precision,
            s.recall,
            s.f1,
            s.support
        );
    }
    let _ = writeln!(
        out,
        "\nscored {}  unanswered {}  failed {}",
        report.scored, report.unk_count, report.failed_count
    );
    out
}
