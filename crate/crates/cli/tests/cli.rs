use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tsa_core::backend::{request_key, save_transcript, FinishReason, GenerationParams, TranscriptEntry};
use tsa_core::corpus::{import_dataset, DatasetFormat};
use tsa_core::prompts::PromptRegistry;
use tsa_core::{Lang, Sample, Split};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/sample50.csv")
}

fn tsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsa")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_args(extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = ["--dataset", fixture().to_str().unwrap(), "--lang", "en", "--split", "test"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run(cmd: &[&str], extra: &[&str]) -> Output {
    let mut args: Vec<String> = cmd.iter().map(|s| s.to_string()).collect();
    args.extend(data_args(extra));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    tsa(&refs)
}

fn samples() -> Vec<Sample> {
    import_dataset(&fixture(), DatasetFormat::Csv, Some(Lang::En), Some(Split::Test)).unwrap()
}

/// Replay config plus transcript answering the PO-en prompt for every
/// fixture row; every fifth answer matches no label.
fn replay_backend(dir: &Path, skip: usize) -> PathBuf {
    let registry = PromptRegistry::builtin();
    let spec = registry.prompt("PO-en").unwrap();
    let params = GenerationParams::zero_shot("scripted");
    let entries: Vec<TranscriptEntry> = samples()
        .iter()
        .enumerate()
        .skip(skip)
        .map(|(i, s)| {
            let prompt = spec.render(s).unwrap();
            let text = if i % 5 == 0 { "Hard to say.".to_string() } else { format!("It is {}.", s.gold.unwrap()) };
            TranscriptEntry { key: request_key(&params, None, &prompt), prompt, text, finish_reason: FinishReason::Stop }
        })
        .collect();
    save_transcript(&entries, &dir.join("answers.jsonl")).unwrap();
    let cfg = dir.join("replay.toml");
    fs::write(
        &cfg,
        "backend_id = \"replay\"\nkind = \"replay\"\ntranscript = \"answers.jsonl\"\n\n[params]\nmodel_id = \"scripted\"\n",
    )
    .unwrap();
    cfg
}

#[test]
fn validate_prints_counts() {
    let out = run(&["validate"], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let person = text.lines().find(|l| l.starts_with("PERSON")).unwrap();
    assert!(person.contains("15"), "{text}");
    assert!(text.contains("50"));
}

#[test]
fn validate_reports_bad_rows() {
    let bad = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/bad_rows.csv");
    let out = tsa(&["validate", "--dataset", bad.to_str().unwrap(), "--lang", "en", "--split", "dev"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("row 1") && err.contains("row 2"), "{err}");
}

#[test]
fn csv_without_language_is_a_config_error() {
    let out = tsa(&["validate", "--dataset", fixture().to_str().unwrap(), "--split", "test"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infer_evaluate_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = replay_backend(d, 0);
    let store = d.join("store");
    let preds = d.join("preds.jsonl");
    let transcript = d.join("recorded.jsonl");
    let (cfg_s, store_s, preds_s, tr_s) =
        (cfg.to_str().unwrap(), store.to_str().unwrap(), preds.to_str().unwrap(), transcript.to_str().unwrap());

    let out = run(
        &["infer"],
        &["--backend", cfg_s, "--store", store_s, "--prompt", "PO", "--out", preds_s, "--record-transcript", tr_s],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("completed 50  failed 0  pending 0"), "{text}");
    let run_id = text.lines().next().unwrap().strip_prefix("run ").unwrap().to_string();

    // Warm rerun: nothing new is appended.
    let records_before = fs::read(store.join("records.jsonl")).unwrap();
    let again = run(&["infer"], &["--backend", cfg_s, "--store", store_s]);
    assert!(again.status.success());
    assert_eq!(fs::read(store.join("records.jsonl")).unwrap(), records_before);

    let json = d.join("eval.json");
    let out = run(&["evaluate"], &["--predictions", preds_s, "--json", json.to_str().unwrap(), "--name", "replay"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let header: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["Model", "F1^PN", "F1^PN0", "N/A%"]);
    assert!(text.lines().nth(2).unwrap().trim_end().ends_with("20.00"), "{text}");

    let from_store = run(&["evaluate"], &["--store", store_s, "--run", &run_id]);
    assert!(from_store.status.success(), "{}", stderr(&from_store));
    assert_eq!(
        stdout(&from_store).lines().nth(2).unwrap().split_whitespace().skip(1).collect::<Vec<_>>(),
        text.lines().nth(2).unwrap().split_whitespace().skip(1).collect::<Vec<_>>()
    );

    let inspect = tsa(&["transcript", "inspect", tr_s]);
    assert!(stdout(&inspect).starts_with("50 entries"));
    let exported = d.join("exported.jsonl");
    let out = tsa(&["transcript", "export", "--store", store_s, "--run", &run_id, "--backend", cfg_s, "--out", exported.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read(&exported).unwrap(), fs::read(&transcript).unwrap());

    let dis = d.join("dis.jsonl");
    let out = run(&["report", "disagreements"], &["--store", store_s, "--run", &run_id, "--out", dis.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let lines = fs::read_to_string(&dis).unwrap();
    // Unanswered rows score as neutral, so only non-neutral gold among them disagrees.
    assert!(lines.lines().count() > 0 && lines.lines().count() <= 10);
    assert!(lines.contains("\"hops\""));

    let out = run(&["report", "cross"], &["--system", &format!("a={preds_s}"), "--system", &format!("b={preds_s}"), "--min-wrong", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("wrong in at least 2"));

    let out = tsa(&["report", "table", "--eval", &format!("one={}", json.display()), "--eval", &format!("two={}", json.display())]);
    assert_eq!(stdout(&out).lines().count(), 4);

    let out = tsa(&["runs", "--store", store_s]);
    assert!(stdout(&out).contains(&run_id));
}

#[test]
fn missing_transcript_entry_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replay_backend(dir.path(), 10);
    let store = dir.path().join("store");
    let out = run(
        &["infer"],
        &["--backend", cfg.to_str().unwrap(), "--store", store.to_str().unwrap(), "--max-in-flight", "1"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("rerun to resume"));
}

#[test]
fn missing_api_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("chat.toml");
    fs::write(
        &cfg,
        "backend_id = \"gpt\"\nkind = \"chat_http\"\nendpoint = \"http://127.0.0.1:9/v1\"\nauth_env = \"TSA_CLI_TEST_UNSET_KEY\"\n\n[params]\nmodel_id = \"gpt-4\"\n",
    )
    .unwrap();
    let out = run(&["infer"], &["--backend", cfg.to_str().unwrap(), "--store", dir.path().join("s").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("TSA_CLI_TEST_UNSET_KEY"));
}

#[test]
fn thor_run_against_a_zero_shot_transcript_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replay_backend(dir.path(), 0);
    let out = tsa(&[
        "infer",
        "--dataset",
        fixture().to_str().unwrap(),
        "--lang",
        "en",
        "--split",
        "test",
        "--mode",
        "thor",
        "--backend",
        cfg.to_str().unwrap(),
        "--store",
        dir.path().join("s").to_str().unwrap(),
        "--limit",
        "1",
    ]);
    // The replay transcript has no chain prompts: the first hop is a miss.
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn checkpoint_curve() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("checkpoints.json");
    fs::write(&manifest, r#"{"checkpoints":[{"epoch":1,"dev_f1_pn":40.5},{"epoch":2,"dev_f1_pn":52.0},{"epoch":3,"dev_f1_pn":52.0}]}"#)
        .unwrap();
    let out = run(&["report", "curve", "--checkpoints", manifest.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("epoch,f1_pn\n1,40.5\n"));
    assert!(text.contains("best epoch 2"));
}
