mod common;

use proptest::prelude::*;

use tsa_core::corpus::{
    import_dataset, merge_translation_from, read_dataset, validate_split, write_jsonl, CorpusError, DatasetFormat,
    RowProblem,
};
use tsa_core::{EntityType, Label, Lang, Sample, Split};

fn entity_type() -> impl Strategy<Value = EntityType> {
    prop::sample::select(EntityType::ALL.to_vec())
}

fn sample_strategy() -> impl Strategy<Value = Sample> {
    (
        "[0-9]{1,6}",
        "\\PC{1,80}",
        "\\PC{1,20}",
        entity_type(),
        prop::option::of(prop::sample::select(Label::CLASSES.to_vec())),
        prop::sample::select(vec![Lang::Ru, Lang::En]),
    )
        .prop_filter("non-blank", |(_, s, t, ..)| !s.trim().is_empty() && !t.trim().is_empty())
        .prop_map(|(id, sentence, target, entity_type, gold, lang)| Sample {
            id,
            sentence,
            target,
            entity_type,
            gold,
            lang,
            split: Split::Dev,
        })
}

fn dataset() -> impl Strategy<Value = Vec<Sample>> {
    prop::collection::vec(sample_strategy(), 0..30).prop_map(|mut v| {
        let mut seen = std::collections::HashSet::new();
        v.retain(|s| seen.insert(s.id.clone()));
        v
    })
}

proptest! {
    #[test]
    fn jsonl_round_trip(samples in dataset()) {
        let mut buf = Vec::new();
        write_jsonl(&samples, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), DatasetFormat::Jsonl, None, None).unwrap();
        prop_assert_eq!(back, samples);
    }

    #[test]
    fn stats_ignore_order(samples in dataset(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = samples.clone();
        shuffled.shuffle(&mut rand::rngs::StdRng::seed_from_u64(seed));
        let a = validate_split(&samples);
        let b = validate_split(&shuffled);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.total, a.counts.values().sum::<usize>());
    }

    #[test]
    fn translation_keeps_everything_but_text(samples in dataset()) {
        let sidecar: String = samples
            .iter()
            .map(|s| serde_json::json!({"id": s.id, "sentence": format!("EN {}", s.id), "target": "T"}).to_string() + "\n")
            .collect();
        let merged = merge_translation_from(samples.clone(), sidecar.as_bytes()).unwrap();
        prop_assert_eq!(merged.len(), samples.len());
        for (m, s) in merged.iter().zip(&samples) {
            prop_assert_eq!(&m.id, &s.id);
            prop_assert_eq!(m.gold, s.gold);
            prop_assert_eq!(m.entity_type, s.entity_type);
            prop_assert_eq!(m.split, s.split);
            prop_assert_eq!(m.lang, Lang::En);
        }
    }
}

#[test]
fn fixture_counts() {
    let samples = import_dataset(&common::fixture("sample50.csv"), DatasetFormat::Csv, Some(Lang::En), Some(Split::Test))
        .unwrap();
    let stats = validate_split(&samples);
    assert_eq!(stats.total, 50);
    assert_eq!(stats.count(EntityType::Person), 15);
    assert_eq!(stats.count(EntityType::Profession), 12);
    assert_eq!(stats.count(EntityType::Organization), 11);
    assert_eq!(stats.count(EntityType::Country), 9);
    assert_eq!(stats.count(EntityType::Nationality), 3);
}

#[test]
fn bad_rows_are_reported_by_number() {
    let err = import_dataset(&common::fixture("bad_rows.csv"), DatasetFormat::Csv, Some(Lang::En), Some(Split::Dev))
        .unwrap_err();
    let CorpusError::Rows(rows) = err else { panic!("expected row errors") };
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].row, 1);
    assert!(matches!(rows[0].problem, RowProblem::BadEntityType(_)));
    assert_eq!(rows[1].row, 2);
    assert!(matches!(rows[1].problem, RowProblem::BadLabelValue(ref v) if v == "2"));
}

#[test]
fn translation_errors() {
    let original = vec![
        common::sample("7", "Путин выступил.", "Путин", Label::Neutral, Lang::Ru),
        common::sample("9", "Газпром упал.", "Газпром", Label::Negative, Lang::Ru),
    ];
    let only7 = r#"{"id":"7","sentence":"Putin spoke.","target":"Putin"}"#;
    assert!(matches!(
        merge_translation_from(original.clone(), only7.as_bytes()),
        Err(CorpusError::MissingTranslation(id)) if id == "9"
    ));
    let extra = format!(
        "{only7}\n{}\n{}\n",
        r#"{"id":"9","sentence":"Gazprom fell.","target":"Gazprom"}"#,
        r#"{"id":"99","sentence":"x","target":"y"}"#
    );
    assert!(matches!(
        merge_translation_from(original, extra.as_bytes()),
        Err(CorpusError::UnknownId(id)) if id == "99"
    ));
}
