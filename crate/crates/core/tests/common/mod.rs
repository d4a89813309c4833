#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use tsa_core::backend::{Backend, BackendError, CompletionResult, FinishReason, GenerationParams, ReplayBackend};
use tsa_core::prompts::{apply_brevity_suffix, PromptSpec, ThorChainSpec};
use tsa_core::{EntityType, Label, Lang, Sample, Split};

/// Scores computed straight from the definitions, one class at a time, with
/// no shared code path with the library.
#[derive(Debug, Clone, Copy)]
pub struct OracleScores {
    pub precision: [f64; 3],
    pub recall: [f64; 3],
    pub f1: [f64; 3],
    pub f1_pn: f64,
    pub f1_pn0: f64,
    pub na_rate: f64,
}

const ORDER: [Label; 3] = [Label::Positive, Label::Negative, Label::Neutral];

pub fn oracle(gold: &[Label], pred: &[Label]) -> OracleScores {
    assert_eq!(gold.len(), pred.len());
    let pred: Vec<Label> = pred.iter().map(|&p| if p == Label::Unk { Label::Neutral } else { p }).collect();
    let mut precision = [0.0; 3];
    let mut recall = [0.0; 3];
    let mut f1 = [0.0; 3];
    for (i, &c) in ORDER.iter().enumerate() {
        let mut tp = 0.0;
        let mut pred_c = 0.0;
        let mut gold_c = 0.0;
        for j in 0..gold.len() {
            if pred[j] == c {
                pred_c += 1.0;
            }
            if gold[j] == c {
                gold_c += 1.0;
            }
            if pred[j] == c && gold[j] == c {
                tp += 1.0;
            }
        }
        precision[i] = if pred_c == 0.0 { 0.0 } else { tp / pred_c };
        recall[i] = if gold_c == 0.0 { 0.0 } else { tp / gold_c };
        f1[i] = if precision[i] + recall[i] == 0.0 {
            0.0
        } else {
            2.0 * precision[i] * recall[i] / (precision[i] + recall[i])
        };
    }
    OracleScores {
        precision,
        recall,
        f1,
        f1_pn: 100.0 * (f1[0] + f1[1]) / 2.0,
        f1_pn0: 100.0 * (f1[0] + f1[1] + f1[2]) / 3.0,
        na_rate: 0.0,
    }
}

pub fn oracle_with_unk(gold: &[Label], pred: &[Label]) -> OracleScores {
    let mut s = oracle(gold, pred);
    let unk = pred.iter().filter(|&&p| p == Label::Unk).count();
    s.na_rate = 100.0 * unk as f64 / gold.len() as f64;
    s
}

pub fn sample(id: &str, sentence: &str, target: &str, gold: Label, lang: Lang) -> Sample {
    Sample {
        id: id.into(),
        sentence: sentence.into(),
        target: target.into(),
        entity_type: EntityType::Person,
        gold: Some(gold),
        lang,
        split: Split::Test,
    }
}

pub fn five_samples() -> Vec<Sample> {
    [
        ("s1", "Legendary musician Chuck Berry fainted during a concert in Chicago.", "Chuck Berry", Label::Positive),
        ("s2", "The court fined Gazprom for breaking the contract.", "Gazprom", Label::Negative),
        ("s3", "Doctors held a meeting on Tuesday.", "Doctors", Label::Neutral),
        ("s4", "Critics praised France for its new climate law.", "France", Label::Positive),
        ("s5", "Protesters condemned the minister over the failed deal.", "minister", Label::Negative),
    ]
    .into_iter()
    .map(|(id, s, t, g)| sample(id, s, t, g, Lang::En))
    .collect()
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Replay backend answering one zero-shot prompt per sample.
pub fn scripted_zeroshot(spec: &PromptSpec, samples: &[Sample], answer: impl Fn(&Sample) -> String) -> ReplayBackend {
    let prompts: Vec<(String, String)> =
        samples.iter().map(|s| (spec.render(s).unwrap(), answer(s))).collect();
    ReplayBackend::scripted(
        "replay",
        GenerationParams::zero_shot("scripted"),
        None,
        prompts.iter().map(|(p, a)| (p.as_str(), a.as_str())),
    )
}

/// Hop answers used by [`scripted_thor`]; the final answer is the gold label.
pub fn thor_answers(sample: &Sample) -> [String; 4] {
    [
        format!("aspect of {}", sample.target),
        format!("opinion on {}", sample.target),
        format!("polarity for {}", sample.id),
        sample.gold.unwrap().as_str().to_string(),
    ]
}

/// All four prompts of one sample's chain, in issue order.
pub fn thor_prompts(chain: &ThorChainSpec, sample: &Sample, brevity: bool) -> Vec<String> {
    let answers = thor_answers(sample);
    let mut out = Vec::new();
    let mut prior: Vec<String> = Vec::new();
    for k in 1..=3 {
        out.push(chain.render_hop(k, sample, &prior).unwrap());
        prior.push(answers[k - 1].clone());
    }
    out.push(chain.render_final(sample, &prior).unwrap());
    if brevity {
        out = out.iter().map(|p| apply_brevity_suffix(p)).collect();
    }
    out
}

pub fn scripted_thor(chain: &ThorChainSpec, samples: &[Sample]) -> ReplayBackend {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for s in samples {
        let answers = thor_answers(s);
        for (p, a) in thor_prompts(chain, s, false).into_iter().zip(answers) {
            pairs.push((p, a));
        }
    }
    ReplayBackend::scripted(
        "replay",
        GenerationParams::fine_tuned("scripted"),
        None,
        pairs.iter().map(|(p, a)| (p.as_str(), a.as_str())),
    )
}

type Responder = dyn Fn(&str, usize) -> Result<String, BackendError> + Send + Sync;

/// Backend driven by a closure of (prompt, call index); logs every prompt.
pub struct FnBackend {
    params: GenerationParams,
    respond: Box<Responder>,
    pub log: Mutex<Vec<String>>,
}

impl FnBackend {
    pub fn new(respond: impl Fn(&str, usize) -> Result<String, BackendError> + Send + Sync + 'static) -> Self {
        Self { params: GenerationParams::zero_shot("fn"), respond: Box::new(respond), log: Mutex::new(Vec::new()) }
    }

    pub fn calls(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    pub fn prompts(&self) -> Vec<String> {
        self.log.lock().unwrap().clone()
    }
}

impl Backend for FnBackend {
    fn backend_id(&self) -> &str {
        "fn"
    }

    fn params(&self) -> &GenerationParams {
        &self.params
    }

    fn system_message(&self) -> Option<&str> {
        None
    }

    fn complete(&self, prompt: &str) -> Result<CompletionResult, BackendError> {
        let n = {
            let mut log = self.log.lock().unwrap();
            log.push(prompt.to_string());
            log.len() - 1
        };
        let text = (self.respond)(prompt, n)?;
        Ok(CompletionResult::new(text, FinishReason::Stop, Duration::ZERO))
    }
}

/// Every file under `dir` with its bytes, `ts` values blanked out and the
/// lines of JSONL logs sorted (record order carries no meaning).
pub fn store_snapshot(dir: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let text = std::fs::read_to_string(&path).unwrap();
            let mut lines: Vec<String> = text.lines().map(blank_ts).collect();
            if path.extension().is_some_and(|e| e == "jsonl") {
                lines.sort();
            }
            out.push((path.strip_prefix(dir).unwrap().display().to_string(), lines.join("\n")));
        }
    }
    out.sort();
    out
}

fn blank_ts(line: &str) -> String {
    match line.find("\"ts\":") {
        Some(i) => {
            let rest = &line[i + 5..];
            let end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
            format!("{}\"ts\":0{}", &line[..i], &rest[end..])
        }
        None => line.to_string(),
    }
}
