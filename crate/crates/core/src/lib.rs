//! Evaluation harness for targeted (entity-oriented) sentiment analysis with
//! large language models.
//!
//! The pipeline is: load a dataset ([`corpus`]), render prompts
//! ([`prompts`]), query a model ([`backend`]) either once per sample or
//! through the three-hop reasoning chain ([`chain`]), map answers to labels
//! ([`extract`]), and score them ([`metrics`], [`predictions`]).
//! [`report`] covers error analysis across systems.

pub mod backend;
pub mod chain;
pub mod corpus;
pub mod digest;
pub mod extract;
pub mod metrics;
pub mod predictions;
pub mod prompts;
pub mod report;
pub mod store;
pub mod types;

pub use backend::{Backend, BackendConfig, BackendError, BackendKind, CompletionResult, GenerationParams};
pub use chain::{collect_predictions, run_thor, run_zeroshot, ChainError, RunOptions};
pub use corpus::{import_dataset, validate_split, Sample, SplitStats};
pub use extract::{extract_exact, extract_label, strip_prompt_echo, TemplateSet};
pub use metrics::{score, ConfusionMatrix, EvalReport, ScoredPair};
pub use predictions::Prediction;
pub use prompts::{PromptRegistry, PromptSpec, ThorChainSpec};
pub use store::{InferenceRecord, Mode, RunManifest, RunStore};
pub use types::{EntityType, Label, Lang, Split};
