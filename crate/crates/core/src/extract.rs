//! Mapping free-text model answers onto sentiment labels.
//!
//! Chat and instruction models answer in prose, so zero-shot responses are
//! read by an ordered substring check over the case-folded text: neutral is
//! tried first, then positive, then negative, and the first template found
//! anywhere in the answer wins. Nothing found yields [`Label::Unk`].
//!
//! Fine-tuned seq2seq models are trained to emit the bare class string, so
//! their output goes through [`extract_exact`] instead.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Label, Lang};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template set must check neutral, positive, negative in that order")]
    WrongOrder,
    #[error("template for {0} is empty")]
    Empty(Label),
    #[error("templates for {0} and {1} are identical")]
    Duplicate(Label, Label),
}

/// Per-language class templates in check order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplateSet", into = "RawTemplateSet")]
pub struct TemplateSet {
    lang: Lang,
    pairs: [(Label, String); 3],
}

#[derive(Serialize, Deserialize)]
struct RawTemplateSet {
    lang: Lang,
    neutral: String,
    positive: String,
    negative: String,
}

impl TryFrom<RawTemplateSet> for TemplateSet {
    type Error = TemplateError;

    fn try_from(raw: RawTemplateSet) -> Result<Self, Self::Error> {
        TemplateSet::new(
            raw.lang,
            [
                (Label::Neutral, raw.neutral),
                (Label::Positive, raw.positive),
                (Label::Negative, raw.negative),
            ],
        )
    }
}

impl From<TemplateSet> for RawTemplateSet {
    fn from(set: TemplateSet) -> Self {
        let [(_, neutral), (_, positive), (_, negative)] = set.pairs;
        RawTemplateSet { lang: set.lang, neutral, positive, negative }
    }
}

impl TemplateSet {
    pub fn new(lang: Lang, pairs: [(Label, String); 3]) -> Result<Self, TemplateError> {
        let order: Vec<Label> = pairs.iter().map(|(l, _)| *l).collect();
        if order != [Label::Neutral, Label::Positive, Label::Negative] {
            return Err(TemplateError::WrongOrder);
        }
        let pairs = pairs.map(|(l, s)| (l, fold_case(&s)));
        for (label, s) in &pairs {
            if s.is_empty() {
                return Err(TemplateError::Empty(*label));
            }
        }
        for i in 0..3 {
            for j in i + 1..3 {
                if pairs[i].1 == pairs[j].1 {
                    return Err(TemplateError::Duplicate(pairs[i].0, pairs[j].0));
                }
            }
        }
        Ok(Self { lang, pairs })
    }

    pub fn english() -> Self {
        Self::new(
            Lang::En,
            [
                (Label::Neutral, "neutral".into()),
                (Label::Positive, "positive".into()),
                (Label::Negative, "negative".into()),
            ],
        )
        .expect("built-in English templates are valid")
    }

    /// Stems, so that inflected forms such as «позитивная» still match.
    pub fn russian() -> Self {
        Self::new(
            Lang::Ru,
            [
                (Label::Neutral, "нейтрал".into()),
                (Label::Positive, "позитив".into()),
                (Label::Negative, "негатив".into()),
            ],
        )
        .expect("built-in Russian templates are valid")
    }

    pub fn for_lang(lang: Lang) -> Self {
        match lang {
            Lang::En => Self::english(),
            Lang::Ru => Self::russian(),
        }
    }

    pub fn lang(&self) -> Lang {
        self.lang
    }

    pub fn pairs(&self) -> impl Iterator<Item = (Label, &str)> {
        self.pairs.iter().map(|(l, s)| (*l, s.as_str()))
    }

    pub fn template(&self, label: Label) -> Option<&str> {
        self.pairs().find(|(l, _)| *l == label).map(|(_, s)| s)
    }
}

/// Unicode caseless form used for matching: upper-case then lower-case, so
/// that characters whose lower-case forms differ but share an upper-case
/// (e.g. dotless ı and i) compare equal.
pub fn fold_case(text: &str) -> String {
    text.to_uppercase().to_lowercase()
}

/// Drop an echoed copy of the prompt from the front of a response.
///
/// Leading whitespace of both strings is ignored when looking for the echo.
/// Anything that does not start with the prompt is returned as is.
pub fn strip_prompt_echo<'a>(response: &'a str, prompt: &str) -> &'a str {
    let prompt = prompt.trim_start();
    if prompt.is_empty() {
        return response;
    }
    response.trim_start().strip_prefix(prompt).unwrap_or(response)
}

/// Ordered substring check over the case-folded response.
pub fn extract_label(response: &str, templates: &TemplateSet) -> Label {
    let folded = fold_case(response);
    templates
        .pairs()
        .find(|(_, needle)| folded.contains(needle))
        .map(|(label, _)| label)
        .unwrap_or(Label::Unk)
}

/// Echo-stripping followed by [`extract_label`].
pub fn extract_from_response(response: &str, prompt: &str, templates: &TemplateSet) -> Label {
    extract_label(strip_prompt_echo(response, prompt), templates)
}

/// The exact-match class strings used for fine-tuned model output.
pub const LABEL_STRINGS: [(Label, &str); 3] = [
    (Label::Positive, "positive"),
    (Label::Negative, "negative"),
    (Label::Neutral, "neutral"),
];

/// Label whose string equals the trimmed, case-folded response; else `Unk`.
pub fn extract_exact(response: &str, label_strings: &[(Label, &str)]) -> Label {
    let answer = fold_case(response.trim());
    label_strings
        .iter()
        .find(|(_, s)| fold_case(s) == answer)
        .map(|(l, _)| *l)
        .unwrap_or(Label::Unk)
}
