//! Audit pipeline for possessive-pronoun errors in machine translation of
//! same-gender relationship sentences.
//!
//! The pipeline has five stages, each in its own module:
//!
//! * [`corpus`] expands a gendered lexicon into template sentences for
//!   French, Italian and Spanish.
//! * [`mtgateway`] translates those sentences to English through HTTP,
//!   replay or synthetic backends, with a persistent cache.
//! * [`evaluator`] extracts the English possessive pronoun and scores it
//!   against the grammatical gender of the source subject.
//! * [`stats`] computes stratified accuracies, McNemar paired tests and a
//!   logistic regression over occupation covariates.
//! * [`metadata`] loads those occupation covariates.
//!
//! [`clireport`] wires the stages together behind the `relaudit` binary.

pub mod clireport;
pub mod corpus;
pub mod evaluator;
pub mod metadata;
pub mod mtgateway;
pub mod stats;

pub use corpus::{Gender, GeneratedSentence, Language, Lexicon, RelationshipType, TargetFamily};
pub use evaluator::{EvaluationOutcome, ExtractionMethod, PronounClass};
pub use mtgateway::TranslationRecord;
