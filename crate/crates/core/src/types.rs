//! Closed vocabularies shared by every module: sentiment labels, languages,
//! entity types and dataset splits.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unrecognised {kind} value {value:?}")]
pub struct ParseEnumError {
    pub kind: &'static str,
    pub value: String,
}

impl ParseEnumError {
    fn new(kind: &'static str, value: &str) -> Self {
        Self {
            kind,
            value: value.to_string(),
        }
    }
}

/// Sentiment toward a target entity.
///
/// `Unk` marks a model answer in which none of the class templates matched.
/// It is never a gold label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "positive")]
    Positive,
    #[serde(rename = "negative")]
    Negative,
    #[serde(rename = "neutral")]
    Neutral,
    #[serde(rename = "UNK")]
    Unk,
}

impl Label {
    /// The three scored classes, in confusion-matrix index order.
    pub const CLASSES: [Label; 3] = [Label::Positive, Label::Negative, Label::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
            Label::Neutral => "neutral",
            Label::Unk => "UNK",
        }
    }

    pub fn is_class(self) -> bool {
        self != Label::Unk
    }

    /// Index into [`Label::CLASSES`]; `None` for `Unk`.
    pub fn class_index(self) -> Option<usize> {
        match self {
            Label::Positive => Some(0),
            Label::Negative => Some(1),
            Label::Neutral => Some(2),
            Label::Unk => None,
        }
    }

    /// Signed annotation code: -1 negative, 0 neutral, 1 positive.
    pub fn from_code(code: i64) -> Option<Label> {
        match code {
            -1 => Some(Label::Negative),
            0 => Some(Label::Neutral),
            1 => Some(Label::Positive),
            _ => None,
        }
    }

    pub fn code(self) -> Option<i64> {
        match self {
            Label::Negative => Some(-1),
            Label::Neutral => Some(0),
            Label::Positive => Some(1),
            Label::Unk => None,
        }
    }

    /// Scoring view: unanswered counts as neutral.
    pub fn folded(self) -> Label {
        if self == Label::Unk {
            Label::Neutral
        } else {
            self
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "positive" => Ok(Label::Positive),
            "negative" => Ok(Label::Negative),
            "neutral" => Ok(Label::Neutral),
            "UNK" => Ok(Label::Unk),
            other => Err(ParseEnumError::new("label", other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    Ru,
    En,
}

impl Lang {
    pub fn as_str(self) -> &'static str {
        match self {
            Lang::Ru => "ru",
            Lang::En => "en",
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Lang {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ru" => Ok(Lang::Ru),
            "en" => Ok(Lang::En),
            _ => Err(ParseEnumError::new("language", s)),
        }
    }
}

/// Annotated category of the target entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityType {
    Person,
    Profession,
    Organization,
    Country,
    Nationality,
}

impl EntityType {
    pub const ALL: [EntityType; 5] = [
        EntityType::Person,
        EntityType::Profession,
        EntityType::Organization,
        EntityType::Country,
        EntityType::Nationality,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Person => "PERSON",
            EntityType::Profession => "PROFESSION",
            EntityType::Organization => "ORGANIZATION",
            EntityType::Country => "COUNTRY",
            EntityType::Nationality => "NATIONALITY",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PERSON" => Ok(EntityType::Person),
            "PROFESSION" => Ok(EntityType::Profession),
            "ORGANIZATION" => Ok(EntityType::Organization),
            "COUNTRY" => Ok(EntityType::Country),
            "NATIONALITY" => Ok(EntityType::Nationality),
            _ => Err(ParseEnumError::new("entity type", s)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "valid" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(ParseEnumError::new("split", s)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_codes_map_to_labels() {
        assert_eq!(Label::from_code(-1), Some(Label::Negative));
        assert_eq!(Label::from_code(0), Some(Label::Neutral));
        assert_eq!(Label::from_code(1), Some(Label::Positive));
        assert_eq!(Label::from_code(7), None);
        for l in Label::CLASSES {
            assert_eq!(Label::from_code(l.code().unwrap()), Some(l));
        }
    }

    #[test]
    fn label_wire_strings() {
        assert_eq!(serde_json::to_string(&Label::Unk).unwrap(), "\"UNK\"");
        assert_eq!(serde_json::to_string(&Label::Neutral).unwrap(), "\"neutral\"");
        assert_eq!("UNK".parse::<Label>().unwrap(), Label::Unk);
        assert!("Positive".parse::<Label>().is_err());
        assert_eq!(Label::Unk.folded(), Label::Neutral);
    }

    #[test]
    fn entity_type_is_case_insensitive_on_input() {
        assert_eq!("country".parse::<EntityType>().unwrap(), EntityType::Country);
        assert_eq!(
            serde_json::to_string(&EntityType::Nationality).unwrap(),
            "\"NATIONALITY\""
        );
        assert!("CITY".parse::<EntityType>().is_err());
    }
}
