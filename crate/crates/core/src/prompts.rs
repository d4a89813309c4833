//! Prompt templates: the zero-shot question variants, the chat system
//! message and the three-hop reasoning chain.
//!
//! Templates are plain text with a fixed set of placeholders. Rendering is a
//! single left-to-right pass over pre-parsed segments, so a sentence that
//! happens to contain `{t}` is never substituted a second time.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::corpus::Sample;
use crate::extract::{TemplateSet, LABEL_STRINGS};
use crate::types::{Label, Lang};

/// Role message sent ahead of the user turn on chat backends.
pub const SYSTEM_MESSAGE: &str = "You are an AI assistant skilled in natural language processing and sentiment analysis. Your task is to analyze text inputs to determine the underlying sentiment, whether it's positive, negative, or neutral. You should consider the nuances of language, including sarcasm, irony, and context. Your responses should include not only the sentiment classification but also a brief explanation of why a particular sentiment was assigned, highlighting key words or phrases that influenced the decision.";

/// Length instruction appended to prompts for token-capped chat models.
pub const BREVITY_SUFFIX: &str = "Create a very short summary that uses 50 completion_tokens or less.";

const BUILTIN_REGISTRY: &str = include_str!("../assets/prompts.toml");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {id}: placeholder {slot} must appear exactly once, found {count}")]
    PlaceholderCount { id: String, slot: Slot, count: usize },
    #[error("template {id}: placeholder {slot} is not allowed here")]
    ForbiddenPlaceholder { id: String, slot: Slot },
    #[error("final label prompt must list {0:?} verbatim")]
    MissingLabelString(&'static str),
    #[error("prompt {spec} is for {expected} but sample {sample} is {found}")]
    LanguageMismatch { spec: String, sample: String, expected: Lang, found: Lang },
    #[error("hop {hop} needs {expected} prior outputs, got {got}")]
    ArityMismatch { hop: usize, expected: usize, got: usize },
    #[error("hop index {0} is outside 1..=3")]
    NoSuchHop(usize),
    #[error("unknown prompt id {0:?}")]
    UnknownPrompt(String),
    #[error("no reasoning chain configured for {0}")]
    NoChain(Lang),
    #[error("prompt {id} declares lang {declared}, but its id implies {implied}")]
    IdLangMismatch { id: String, declared: Lang, implied: Lang },
    #[error("chain for {0}: expected exactly 3 hop prompts, got {1}")]
    HopCount(Lang, usize),
    #[error("registry file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("registry file: {0}")]
    Io(#[from] std::io::Error),
}

/// A substitution point in a template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Sentence,
    Target,
    Aspect,
    Opinion,
    Polarity,
}

impl Slot {
    const ALL: [Slot; 5] = [Slot::Sentence, Slot::Target, Slot::Aspect, Slot::Opinion, Slot::Polarity];

    pub fn token(self) -> &'static str {
        match self {
            Slot::Sentence => "{X}",
            Slot::Target => "{t}",
            Slot::Aspect => "{aspect}",
            Slot::Opinion => "{opinion}",
            Slot::Polarity => "{polarity}",
        }
    }

    /// Hop outputs in chain order.
    const OUTPUTS: [Slot; 3] = [Slot::Aspect, Slot::Opinion, Slot::Polarity];
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(Slot),
}

/// A parsed template body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    body: String,
    segments: Vec<Segment>,
}

impl Template {
    pub fn parse(body: &str) -> Template {
        let mut segments = Vec::new();
        let mut text = String::new();
        let mut rest = body;
        'outer: while !rest.is_empty() {
            if rest.starts_with('{') {
                for slot in Slot::ALL {
                    if let Some(after) = rest.strip_prefix(slot.token()) {
                        if !text.is_empty() {
                            segments.push(Segment::Text(std::mem::take(&mut text)));
                        }
                        segments.push(Segment::Slot(slot));
                        rest = after;
                        continue 'outer;
                    }
                }
            }
            let ch = rest.chars().next().expect("non-empty");
            text.push(ch);
            rest = &rest[ch.len_utf8()..];
        }
        if !text.is_empty() {
            segments.push(Segment::Text(text));
        }
        Template { body: body.to_string(), segments }
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn count(&self, slot: Slot) -> usize {
        self.segments.iter().filter(|s| **s == Segment::Slot(slot)).count()
    }

    fn render_with(&self, value: impl Fn(Slot) -> Option<String>) -> String {
        let mut out = String::with_capacity(self.body.len() + 64);
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                // Validation guarantees every slot present has a value.
                Segment::Slot(slot) => out.push_str(&value(*slot).unwrap_or_default()),
            }
        }
        out
    }

    fn check(&self, id: &str, exactly_once: &[Slot], allowed: &[Slot]) -> Result<(), PromptError> {
        for &slot in exactly_once {
            let count = self.count(slot);
            if count != 1 {
                return Err(PromptError::PlaceholderCount { id: id.to_string(), slot, count });
            }
        }
        for slot in Slot::ALL {
            if self.count(slot) > 0 && !allowed.contains(&slot) {
                return Err(PromptError::ForbiddenPlaceholder { id: id.to_string(), slot });
            }
        }
        Ok(())
    }
}

/// Zero-shot question variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptKind {
    /// The original attitude question.
    Original,
    /// The revised question naming the author or another subject.
    SubjectExplicit,
}

impl PromptKind {
    pub fn code(self) -> &'static str {
        match self {
            PromptKind::Original => "PO",
            PromptKind::SubjectExplicit => "PSE",
        }
    }

    pub fn spec_id(self, lang: Lang) -> String {
        format!("{}-{}", self.code(), lang)
    }
}

impl FromStr for PromptKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "PO" => Ok(PromptKind::Original),
            "PSE" => Ok(PromptKind::SubjectExplicit),
            other => Err(format!("unknown prompt kind {other:?} (expected PO or PSE)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    id: String,
    lang: Lang,
    template: Template,
    answer_templates: TemplateSet,
}

impl PromptSpec {
    pub fn new(id: &str, lang: Lang, body: &str) -> Result<PromptSpec, PromptError> {
        let template = Template::parse(body);
        template.check(id, &[Slot::Sentence, Slot::Target], &[Slot::Sentence, Slot::Target])?;
        Ok(PromptSpec {
            id: id.to_string(),
            lang,
            template,
            answer_templates: TemplateSet::for_lang(lang),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn lang(&self) -> Lang {
        self.lang
    }

    pub fn body(&self) -> &str {
        self.template.body()
    }

    pub fn answer_templates(&self) -> &TemplateSet {
        &self.answer_templates
    }

    pub fn render(&self, sample: &Sample) -> Result<String, PromptError> {
        if sample.lang != self.lang {
            return Err(PromptError::LanguageMismatch {
                spec: self.id.clone(),
                sample: sample.id.clone(),
                expected: self.lang,
                found: sample.lang,
            });
        }
        Ok(self.render_text(&sample.sentence, &sample.target))
    }

    /// Substitute raw strings without the language check.
    pub fn render_text(&self, sentence: &str, target: &str) -> String {
        self.template.render_with(|slot| match slot {
            Slot::Sentence => Some(sentence.to_string()),
            Slot::Target => Some(target.to_string()),
            _ => None,
        })
    }
}

/// Three reasoning hops (aspect, opinion, polarity) plus the final
/// label-inferring prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThorChainSpec {
    lang: Lang,
    hops: [Template; 3],
    final_label: Template,
}

impl ThorChainSpec {
    pub fn new(lang: Lang, hops: [&str; 3], final_label: &str) -> Result<ThorChainSpec, PromptError> {
        let hops = hops.map(Template::parse);
        let base = [Slot::Sentence, Slot::Target];
        for (k, hop) in hops.iter().enumerate() {
            let mut allowed = base.to_vec();
            allowed.extend_from_slice(&Slot::OUTPUTS[..k]);
            hop.check(&format!("thor-{lang} hop {}", k + 1), &[], &allowed)?;
        }
        hops[0].check(&format!("thor-{lang} hop 1"), &base, &base)?;
        let final_label = Template::parse(final_label);
        let mut allowed = base.to_vec();
        allowed.extend_from_slice(&Slot::OUTPUTS);
        final_label.check(&format!("thor-{lang} final"), &[], &allowed)?;
        for (_, s) in LABEL_STRINGS {
            if !final_label.body().contains(s) {
                return Err(PromptError::MissingLabelString(s));
            }
        }
        Ok(ThorChainSpec { lang, hops, final_label })
    }

    pub fn lang(&self) -> Lang {
        self.lang
    }

    pub fn id(&self) -> String {
        format!("THOR-{}", self.lang)
    }

    pub fn label_strings(&self) -> &'static [(Label, &'static str)] {
        &LABEL_STRINGS
    }

    fn check_lang(&self, sample: &Sample) -> Result<(), PromptError> {
        if sample.lang != self.lang {
            return Err(PromptError::LanguageMismatch {
                spec: self.id(),
                sample: sample.id.clone(),
                expected: self.lang,
                found: sample.lang,
            });
        }
        Ok(())
    }

    fn render_template(template: &Template, sample: &Sample, prior: &[String]) -> String {
        template.render_with(|slot| match slot {
            Slot::Sentence => Some(sample.sentence.clone()),
            Slot::Target => Some(sample.target.clone()),
            other => {
                let idx = Slot::OUTPUTS.iter().position(|s| *s == other)?;
                prior.get(idx).map(|s| s.trim().to_string())
            }
        })
    }

    /// Prompt for hop `k` (1-based), given the answers of hops `1..k`.
    pub fn render_hop(&self, k: usize, sample: &Sample, prior_outputs: &[String]) -> Result<String, PromptError> {
        if !(1..=3).contains(&k) {
            return Err(PromptError::NoSuchHop(k));
        }
        if prior_outputs.len() != k - 1 {
            return Err(PromptError::ArityMismatch { hop: k, expected: k - 1, got: prior_outputs.len() });
        }
        self.check_lang(sample)?;
        Ok(Self::render_template(&self.hops[k - 1], sample, prior_outputs))
    }

    /// The label-inferring prompt, given all three hop answers.
    pub fn render_final(&self, sample: &Sample, hop_outputs: &[String]) -> Result<String, PromptError> {
        if hop_outputs.len() != 3 {
            return Err(PromptError::ArityMismatch { hop: 4, expected: 3, got: hop_outputs.len() });
        }
        self.check_lang(sample)?;
        Ok(Self::render_template(&self.final_label, sample, hop_outputs))
    }
}

/// Append the brevity instruction, separated by one space unless the prompt
/// is empty or already ends in whitespace.
pub fn apply_brevity_suffix(prompt: &str) -> String {
    if prompt.is_empty() || prompt.ends_with(char::is_whitespace) {
        format!("{prompt}{BREVITY_SUFFIX}")
    } else {
        format!("{prompt} {BREVITY_SUFFIX}")
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    #[serde(default)]
    prompt: Vec<PromptEntry>,
    #[serde(default)]
    thor: BTreeMap<Lang, ChainEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptEntry {
    id: String,
    lang: Lang,
    body: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainEntry {
    hops: Vec<String>,
    #[serde(rename = "final")]
    final_label: String,
}

const PROMPT_IDS: [&str; 4] = ["PO-ru", "PO-en", "PSE-ru", "PSE-en"];

/// Every prompt the harness knows about. Immutable once loaded.
#[derive(Debug, Clone)]
pub struct PromptRegistry {
    prompts: BTreeMap<String, PromptSpec>,
    chains: BTreeMap<Lang, ThorChainSpec>,
}

impl PromptRegistry {
    /// The embedded defaults.
    pub fn builtin() -> PromptRegistry {
        let mut registry = PromptRegistry { prompts: BTreeMap::new(), chains: BTreeMap::new() };
        registry
            .apply(BUILTIN_REGISTRY)
            .expect("embedded prompt registry is valid");
        registry
    }

    /// Defaults overlaid with the entries of a user registry file.
    pub fn with_overrides(path: &Path) -> Result<PromptRegistry, PromptError> {
        let text = fs::read_to_string(path)?;
        let mut registry = Self::builtin();
        registry.apply(&text)?;
        Ok(registry)
    }

    fn apply(&mut self, text: &str) -> Result<(), PromptError> {
        let file: RegistryFile = toml::from_str(text)?;
        for entry in file.prompt {
            if !PROMPT_IDS.contains(&entry.id.as_str()) {
                return Err(PromptError::UnknownPrompt(entry.id));
            }
            let implied = entry.id.rsplit('-').next().unwrap_or("").parse::<Lang>().ok();
            if let Some(implied) = implied.filter(|l| *l != entry.lang) {
                return Err(PromptError::IdLangMismatch { id: entry.id, declared: entry.lang, implied });
            }
            let spec = PromptSpec::new(&entry.id, entry.lang, &entry.body)?;
            self.prompts.insert(entry.id, spec);
        }
        for (lang, chain) in file.thor {
            let hops: [&str; 3] = match chain.hops.as_slice() {
                [a, b, c] => [a.as_str(), b.as_str(), c.as_str()],
                other => return Err(PromptError::HopCount(lang, other.len())),
            };
            self.chains.insert(lang, ThorChainSpec::new(lang, hops, &chain.final_label)?);
        }
        Ok(())
    }

    pub fn prompt(&self, id: &str) -> Result<&PromptSpec, PromptError> {
        self.prompts.get(id).ok_or_else(|| PromptError::UnknownPrompt(id.to_string()))
    }

    pub fn prompt_for(&self, kind: PromptKind, lang: Lang) -> Result<&PromptSpec, PromptError> {
        self.prompt(&kind.spec_id(lang))
    }

    pub fn chain(&self, lang: Lang) -> Result<&ThorChainSpec, PromptError> {
        self.chains.get(&lang).ok_or(PromptError::NoChain(lang))
    }

    pub fn prompt_ids(&self) -> impl Iterator<Item = &str> {
        self.prompts.keys().map(String::as_str)
    }

    pub fn chain_langs(&self) -> impl Iterator<Item = Lang> + '_ {
        self.chains.keys().copied()
    }

    pub fn system_message(&self) -> &'static str {
        SYSTEM_MESSAGE
    }
}
