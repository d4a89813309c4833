//! Dataset loading, validation and canonicalisation.
//!
//! Three on-disk shapes are understood:
//!
//! * the competition CSV/TSV files with `sentence`, `entity`, `entity_tag`
//!   and (outside the test split) `label` columns holding `-1/0/1`;
//! * the canonical JSONL form, one [`Sample`] per line;
//! * a translation sidecar JSONL (`id`, `sentence`, `target`) that turns a
//!   Russian split into its English counterpart.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::bytes_digest;
use crate::types::{EntityType, Label, Lang, Split};

/// One sentence with one annotated target entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub sentence: String,
    pub target: String,
    pub entity_type: EntityType,
    pub gold: Option<Label>,
    pub lang: Lang,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Tsv,
    Jsonl,
}

impl DatasetFormat {
    /// Guess from the file extension.
    pub fn from_path(path: &Path) -> Option<DatasetFormat> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "csv" => Some(DatasetFormat::Csv),
            "tsv" => Some(DatasetFormat::Tsv),
            "jsonl" | "ndjson" => Some(DatasetFormat::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DatasetFormat::Csv),
            "tsv" => Ok(DatasetFormat::Tsv),
            "jsonl" => Ok(DatasetFormat::Jsonl),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

/// Why a single input row was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowProblem {
    BadLabelValue(String),
    BadEntityType(String),
    EmptyField(&'static str),
    DuplicateId(String),
    /// JSONL row declares a different language or split than requested.
    Mismatch(&'static str, String),
    Malformed(String),
}

impl fmt::Display for RowProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowProblem::BadLabelValue(v) => write!(f, "bad label value {v:?}"),
            RowProblem::BadEntityType(v) => write!(f, "bad entity type {v:?}"),
            RowProblem::EmptyField(name) => write!(f, "empty field `{name}`"),
            RowProblem::DuplicateId(id) => write!(f, "duplicate id {id:?}"),
            RowProblem::Mismatch(field, v) => write!(f, "unexpected {field} {v:?}"),
            RowProblem::Malformed(msg) => write!(f, "malformed row: {msg}"),
        }
    }
}

/// A rejected row. `row` is 1-based and counts data rows only (the CSV
/// header is not a row).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub row: usize,
    pub problem: RowProblem,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.problem)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("{} malformed row(s); first: {}", .0.len(), .0[0])]
    Rows(Vec<RowError>),
    #[error("{0} must be given for delimited input")]
    Unspecified(&'static str),
    #[error("no translation for sample id {0:?}")]
    MissingTranslation(String),
    #[error("translation refers to unknown sample id {0:?}")]
    UnknownId(String),
    #[error("cannot guess dataset format of {0}")]
    UnknownFormat(String),
}

impl CorpusError {
    /// Row-level failures, if that is what this error carries.
    pub fn row_errors(&self) -> &[RowError] {
        match self {
            CorpusError::Rows(rows) => rows,
            _ => &[],
        }
    }
}

/// Load a dataset file. `lang`/`split` are required for CSV/TSV input; for
/// JSONL they are optional filters that every row must agree with.
pub fn import_dataset(
    path: &Path,
    format: DatasetFormat,
    lang: Option<Lang>,
    split: Option<Split>,
) -> Result<Vec<Sample>, CorpusError> {
    let file = File::open(path)?;
    read_dataset(BufReader::new(file), format, lang, split)
}

/// Like [`import_dataset`], guessing the format from the extension. A
/// `.csv` file whose header has tabs but no commas is read as TSV (the
/// competition releases ship that way).
pub fn import_path(
    path: &Path,
    lang: Option<Lang>,
    split: Option<Split>,
) -> Result<Vec<Sample>, CorpusError> {
    let mut format = DatasetFormat::from_path(path)
        .ok_or_else(|| CorpusError::UnknownFormat(path.display().to_string()))?;
    if format == DatasetFormat::Csv {
        let mut header = String::new();
        BufReader::new(File::open(path)?).read_line(&mut header)?;
        if header.contains('\t') && !header.contains(',') {
            format = DatasetFormat::Tsv;
        }
    }
    import_dataset(path, format, lang, split)
}

pub fn read_dataset<R: Read>(
    reader: R,
    format: DatasetFormat,
    lang: Option<Lang>,
    split: Option<Split>,
) -> Result<Vec<Sample>, CorpusError> {
    match format {
        DatasetFormat::Csv => read_delimited(reader, b',', lang, split),
        DatasetFormat::Tsv => read_delimited(reader, b'\t', lang, split),
        DatasetFormat::Jsonl => read_jsonl(reader, lang, split),
    }
}

fn parse_gold(raw: &str) -> Result<Option<Label>, RowProblem> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    if let Ok(code) = raw.parse::<i64>() {
        return Label::from_code(code)
            .map(Some)
            .ok_or_else(|| RowProblem::BadLabelValue(raw.to_string()));
    }
    match raw.parse::<Label>() {
        Ok(Label::Unk) | Err(_) => Err(RowProblem::BadLabelValue(raw.to_string())),
        Ok(label) => Ok(Some(label)),
    }
}

fn read_delimited<R: Read>(
    reader: R,
    delimiter: u8,
    lang: Option<Lang>,
    split: Option<Split>,
) -> Result<Vec<Sample>, CorpusError> {
    let lang = lang.ok_or(CorpusError::Unspecified("language"))?;
    let split = split.ok_or(CorpusError::Unspecified("split"))?;

    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Io(io::Error::new(io::ErrorKind::InvalidData, e)))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let sentence_col = column("sentence").ok_or_else(|| CorpusError::MissingColumn("sentence".into()))?;
    let entity_col = column("entity").ok_or_else(|| CorpusError::MissingColumn("entity".into()))?;
    let tag_col = column("entity_tag").ok_or_else(|| CorpusError::MissingColumn("entity_tag".into()))?;
    let label_col = column("label");
    let id_col = column("id");
    if label_col.is_none() && split != Split::Test {
        return Err(CorpusError::MissingColumn("label".into()));
    }

    let mut samples = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                errors.push(RowError { row, problem: RowProblem::Malformed(e.to_string()) });
                continue;
            }
        };
        let cell = |col: usize| record.get(col).unwrap_or("");
        let result = (|| {
            let id = match id_col {
                Some(c) => cell(c).trim().to_string(),
                None => idx.to_string(),
            };
            let sentence = cell(sentence_col);
            let target = cell(entity_col);
            if id.is_empty() {
                return Err(RowProblem::EmptyField("id"));
            }
            if sentence.trim().is_empty() {
                return Err(RowProblem::EmptyField("sentence"));
            }
            if target.trim().is_empty() {
                return Err(RowProblem::EmptyField("entity"));
            }
            let entity_type = cell(tag_col)
                .parse::<EntityType>()
                .map_err(|_| RowProblem::BadEntityType(cell(tag_col).to_string()))?;
            let gold = match label_col {
                Some(c) => parse_gold(cell(c))?,
                None => None,
            };
            if gold.is_none() && split != Split::Test {
                return Err(RowProblem::EmptyField("label"));
            }
            Ok(Sample {
                id,
                sentence: sentence.to_string(),
                target: target.to_string(),
                entity_type,
                gold,
                lang,
                split,
            })
        })();
        match result {
            Ok(sample) => {
                if !seen.insert(sample.id.clone()) {
                    errors.push(RowError { row, problem: RowProblem::DuplicateId(sample.id) });
                } else {
                    samples.push(sample);
                }
            }
            Err(problem) => errors.push(RowError { row, problem }),
        }
    }
    if errors.is_empty() {
        Ok(samples)
    } else {
        Err(CorpusError::Rows(errors))
    }
}

/// Loose mirror of [`Sample`] so that bad enum values surface as row
/// problems instead of opaque serde errors.
#[derive(Deserialize)]
struct RawSample {
    id: String,
    sentence: String,
    target: String,
    entity_type: String,
    gold: Option<String>,
    lang: String,
    split: String,
}

fn check_raw(raw: RawSample, lang: Option<Lang>, split: Option<Split>) -> Result<Sample, RowProblem> {
    if raw.id.trim().is_empty() {
        return Err(RowProblem::EmptyField("id"));
    }
    if raw.sentence.trim().is_empty() {
        return Err(RowProblem::EmptyField("sentence"));
    }
    if raw.target.trim().is_empty() {
        return Err(RowProblem::EmptyField("target"));
    }
    let entity_type = raw
        .entity_type
        .parse::<EntityType>()
        .map_err(|_| RowProblem::BadEntityType(raw.entity_type.clone()))?;
    let gold = match raw.gold.as_deref() {
        None => None,
        Some(g) => match g.parse::<Label>() {
            Ok(Label::Unk) | Err(_) => return Err(RowProblem::BadLabelValue(g.to_string())),
            Ok(l) => Some(l),
        },
    };
    let row_lang = raw
        .lang
        .parse::<Lang>()
        .map_err(|_| RowProblem::Mismatch("lang", raw.lang.clone()))?;
    let row_split = raw
        .split
        .parse::<Split>()
        .map_err(|_| RowProblem::Mismatch("split", raw.split.clone()))?;
    if lang.is_some_and(|l| l != row_lang) {
        return Err(RowProblem::Mismatch("lang", raw.lang));
    }
    if split.is_some_and(|s| s != row_split) {
        return Err(RowProblem::Mismatch("split", raw.split));
    }
    Ok(Sample {
        id: raw.id,
        sentence: raw.sentence,
        target: raw.target,
        entity_type,
        gold,
        lang: row_lang,
        split: row_split,
    })
}

fn read_jsonl<R: Read>(reader: R, lang: Option<Lang>, split: Option<Split>) -> Result<Vec<Sample>, CorpusError> {
    let mut samples = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let row = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<RawSample>(&line)
            .map_err(|e| RowProblem::Malformed(e.to_string()))
            .and_then(|raw| check_raw(raw, lang, split));
        match parsed {
            Ok(sample) => {
                // Ids are unique per split; the canonical form may mix splits.
                if !seen.insert((sample.split, sample.id.clone())) {
                    errors.push(RowError { row, problem: RowProblem::DuplicateId(sample.id) });
                } else {
                    samples.push(sample);
                }
            }
            Err(problem) => errors.push(RowError { row, problem }),
        }
    }
    if errors.is_empty() {
        Ok(samples)
    } else {
        Err(CorpusError::Rows(errors))
    }
}

/// Write samples in the canonical JSONL form.
pub fn write_jsonl<W: Write>(samples: &[Sample], mut out: W) -> io::Result<()> {
    for sample in samples {
        serde_json::to_writer(&mut out, sample)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn export_jsonl(samples: &[Sample], path: &Path) -> io::Result<()> {
    let file = File::create(path)?;
    write_jsonl(samples, io::BufWriter::new(file))
}

/// Fingerprint of a sample list: SHA-256 of its canonical JSONL bytes.
pub fn dataset_digest(samples: &[Sample]) -> String {
    let mut buf = Vec::new();
    write_jsonl(samples, &mut buf).expect("writing to a Vec cannot fail");
    bytes_digest(&buf)
}

/// Entity-type distribution of one split.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub split: Option<Split>,
    pub counts: BTreeMap<EntityType, usize>,
    pub total: usize,
}

impl SplitStats {
    pub fn count(&self, entity_type: EntityType) -> usize {
        self.counts.get(&entity_type).copied().unwrap_or(0)
    }
}

impl fmt::Display for SplitStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.split.map(|s| s.as_str()).unwrap_or("-");
        writeln!(f, "{:<14}{:>8}{:>6}", format!("split: {name}"), "#", "%")?;
        for et in EntityType::ALL {
            let n = self.count(et);
            let pct = if self.total == 0 { 0.0 } else { 100.0 * n as f64 / self.total as f64 };
            writeln!(f, "{:<14}{:>8}{:>6.0}", et.as_str(), n, pct)?;
        }
        write!(f, "{:<14}{:>8}{:>6}", "TOTAL", self.total, if self.total == 0 { 0 } else { 100 })
    }
}

/// Count samples per entity type. The split recorded is that of the first
/// sample.
pub fn validate_split<'a, I>(samples: I) -> SplitStats
where
    I: IntoIterator<Item = &'a Sample>,
{
    let mut stats = SplitStats {
        counts: EntityType::ALL.iter().map(|&et| (et, 0)).collect(),
        ..SplitStats::default()
    };
    for sample in samples {
        stats.split.get_or_insert(sample.split);
        *stats.counts.entry(sample.entity_type).or_insert(0) += 1;
        stats.total += 1;
    }
    stats
}

#[derive(Debug, Deserialize)]
struct TranslationRow {
    id: String,
    sentence: String,
    target: String,
}

/// Replace sentence and target with their English translation.
pub fn merge_translation(original: Vec<Sample>, translated: &Path) -> Result<Vec<Sample>, CorpusError> {
    let file = File::open(translated)?;
    merge_translation_from(original, BufReader::new(file))
}

pub fn merge_translation_from<R: Read>(original: Vec<Sample>, reader: R) -> Result<Vec<Sample>, CorpusError> {
    let mut table: HashMap<String, TranslationRow> = HashMap::new();
    let mut errors = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let row = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TranslationRow>(&line) {
            Ok(tr) if tr.sentence.trim().is_empty() => {
                errors.push(RowError { row, problem: RowProblem::EmptyField("sentence") })
            }
            Ok(tr) if tr.target.trim().is_empty() => {
                errors.push(RowError { row, problem: RowProblem::EmptyField("target") })
            }
            Ok(tr) => {
                if table.contains_key(&tr.id) {
                    errors.push(RowError { row, problem: RowProblem::DuplicateId(tr.id) });
                } else {
                    table.insert(tr.id.clone(), tr);
                }
            }
            Err(e) => errors.push(RowError { row, problem: RowProblem::Malformed(e.to_string()) }),
        }
    }
    if !errors.is_empty() {
        return Err(CorpusError::Rows(errors));
    }

    let known: HashSet<&str> = original.iter().map(|s| s.id.as_str()).collect();
    let mut extra: Vec<&String> = table.keys().filter(|id| !known.contains(id.as_str())).collect();
    extra.sort();
    if let Some(id) = extra.first() {
        return Err(CorpusError::UnknownId((*id).clone()));
    }

    original
        .into_iter()
        .map(|sample| {
            let tr = table
                .remove(&sample.id)
                .ok_or_else(|| CorpusError::MissingTranslation(sample.id.clone()))?;
            Ok(Sample {
                sentence: tr.sentence,
                target: tr.target,
                lang: Lang::En,
                ..sample
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "sentence,entity,entity_tag,label\n";

    fn csv(body: &str, split: Split) -> Result<Vec<Sample>, CorpusError> {
        let text = format!("{HEADER}{body}");
        read_dataset(text.as_bytes(), DatasetFormat::Csv, Some(Lang::Ru), Some(split))
    }

    #[test]
    fn competition_row_maps_signed_label() {
        let samples = csv(
            "German Economy Minister criticizes Hungary for tax on foreign investors.,Hungary,COUNTRY,-1\n",
            Split::Train,
        )
        .unwrap();
        assert_eq!(samples.len(), 1);
        let s = &samples[0];
        assert_eq!(s.target, "Hungary");
        assert_eq!(s.entity_type, EntityType::Country);
        assert_eq!(s.gold, Some(Label::Negative));
        assert_eq!(s.id, "0");
    }

    #[test]
    fn tab_separated_csv_is_sniffed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train_data.csv");
        std::fs::write(
            &path,
            "sentence\tentity\tentity_tag\tentity_pos_start_rel\tentity_pos_end_rel\tlabel\n\
             Путин, как всегда, выступил.\tПутин\tPERSON\t0\t5\t0\n",
        )
        .unwrap();
        let samples = import_path(&path, Some(Lang::Ru), Some(Split::Train)).unwrap();
        assert_eq!(samples[0].sentence, "Путин, как всегда, выступил.");
        assert_eq!(samples[0].gold, Some(Label::Neutral));
    }

    #[test]
    fn zero_is_neutral() {
        let samples = csv("Prices fell.,Prices,PROFESSION,0\n", Split::Train).unwrap();
        assert_eq!(samples[0].gold, Some(Label::Neutral));
    }

    #[test]
    fn out_of_range_label_is_rejected_with_row() {
        let err = csv("a,b,PERSON,1\nc,d,PERSON,7\n", Split::Train).unwrap_err();
        assert_eq!(
            err.row_errors(),
            &[RowError { row: 2, problem: RowProblem::BadLabelValue("7".into()) }]
        );
    }

    #[test]
    fn missing_and_empty_fields() {
        let text = "sentence,entity,label\nx,y,0\n";
        let err = read_dataset(text.as_bytes(), DatasetFormat::Csv, Some(Lang::Ru), Some(Split::Dev)).unwrap_err();
        assert!(matches!(err, CorpusError::MissingColumn(c) if c == "entity_tag"));

        let err = csv(" ,b,PERSON,1\n", Split::Train).unwrap_err();
        assert_eq!(err.row_errors()[0].problem, RowProblem::EmptyField("sentence"));

        let err = csv("a,b,PERSON,\n", Split::Train).unwrap_err();
        assert_eq!(err.row_errors()[0].problem, RowProblem::EmptyField("label"));
    }

    #[test]
    fn test_split_may_lack_labels() {
        let text = "sentence\tentity\tentity_tag\nx\ty\tNATIONALITY\n";
        let samples = read_dataset(text.as_bytes(), DatasetFormat::Tsv, Some(Lang::Ru), Some(Split::Test)).unwrap();
        assert_eq!(samples[0].gold, None);
        assert_eq!(samples[0].entity_type, EntityType::Nationality);
    }

    #[test]
    fn explicit_ids_must_be_unique() {
        let text = "id,sentence,entity,entity_tag,label\na,x,y,PERSON,1\na,z,w,PERSON,0\n";
        let err = read_dataset(text.as_bytes(), DatasetFormat::Csv, Some(Lang::En), Some(Split::Dev)).unwrap_err();
        assert_eq!(err.row_errors()[0].problem, RowProblem::DuplicateId("a".into()));
    }

    #[test]
    fn jsonl_rejects_unk_gold() {
        let line = r#"{"id":"1","sentence":"s","target":"t","entity_type":"PERSON","gold":"UNK","lang":"en","split":"dev"}"#;
        let err = read_dataset(line.as_bytes(), DatasetFormat::Jsonl, None, None).unwrap_err();
        assert_eq!(err.row_errors()[0].problem, RowProblem::BadLabelValue("UNK".into()));
    }

    #[test]
    fn jsonl_filters_must_agree() {
        let line = r#"{"id":"1","sentence":"s","target":"t","entity_type":"PERSON","gold":null,"lang":"en","split":"dev"}"#;
        let err = read_dataset(line.as_bytes(), DatasetFormat::Jsonl, Some(Lang::Ru), None).unwrap_err();
        assert!(matches!(err.row_errors()[0].problem, RowProblem::Mismatch("lang", _)));
    }

    #[test]
    fn empty_stream_has_zero_stats() {
        let stats = validate_split(&[]);
        assert_eq!(stats.total, 0);
        assert!(EntityType::ALL.iter().all(|&et| stats.count(et) == 0));
        assert_eq!(stats.split, None);
    }

    fn sample(id: &str) -> Sample {
        Sample {
            id: id.into(),
            sentence: "Министр критикует Венгрию.".into(),
            target: "Венгрию".into(),
            entity_type: EntityType::Country,
            gold: Some(Label::Negative),
            lang: Lang::Ru,
            split: Split::Test,
        }
    }

    #[test]
    fn translation_merge_preserves_labels() {
        let sidecar = r#"{"id":"7","sentence":"The minister criticizes Hungary.","target":"Hungary"}"#;
        let merged = merge_translation_from(vec![sample("7")], sidecar.as_bytes()).unwrap();
        assert_eq!(merged[0].id, "7");
        assert_eq!(merged[0].gold, Some(Label::Negative));
        assert_eq!(merged[0].lang, Lang::En);
        assert_eq!(merged[0].target, "Hungary");
        assert_eq!(merged[0].split, Split::Test);
    }

    #[test]
    fn translation_merge_errors() {
        let sidecar = r#"{"id":"7","sentence":"x","target":"y"}"#;
        let err = merge_translation_from(vec![sample("7"), sample("9")], sidecar.as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::MissingTranslation(id) if id == "9"));

        let sidecar = "{\"id\":\"7\",\"sentence\":\"x\",\"target\":\"y\"}\n{\"id\":\"99\",\"sentence\":\"x\",\"target\":\"y\"}\n";
        let err = merge_translation_from(vec![sample("7")], sidecar.as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownId(id) if id == "99"));
    }
}
