//! Stratified accuracy, McNemar paired tests and logistic regression.

pub mod accuracy;
pub mod linalg;
pub mod mcnemar;
pub mod regression;

use std::collections::HashMap;

use thiserror::Error;

use crate::corpus::GeneratedSentence;
use crate::evaluator::EvaluationOutcome;

pub use accuracy::{stratified_accuracy, AccuracyCell, Dimension, StratumKey};
pub use mcnemar::{
    build_pairs, mcnemar, mcnemar_by_stratum, mcnemar_from_counts, McNemarMethod, McNemarResult,
    McNemarRow, OutcomePair,
};
pub use regression::{
    fit_logistic, fit_regression, znormalize, AnalysisRow, Coefficient, DesignMatrix,
    FitOptions, IterationTrace, LogisticModel, Predictor, RegressionResult, RegressionSpec,
};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("outcome for `{0}` has no matching corpus sentence")]
    Unjoined(String),
    #[error("outcome `{sentence_id}` ({backend_id}) has no paired outcome for partner `{partner_id}`")]
    UnmatchedPair {
        sentence_id: String,
        backend_id: String,
        partner_id: String,
    },
    #[error("zero variance: {0}")]
    ZeroVariance(String),
    #[error("no variance in response: every row is {}", if *.0 { "correct" } else { "incorrect" })]
    NoResponseVariance(bool),
    #[error("no analysis rows")]
    EmptyInput,
    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),
    #[error("complete or quasi-complete separation detected (column `{column}`, estimate {estimate:.2})")]
    Separation { column: String, estimate: f64 },
    #[error("did not converge after {} iterations (last gradient max-norm {:.3e})", .trace.len(), .trace.last().map_or(f64::NAN, |t| t.gradient_norm))]
    NonConvergence { trace: Vec<IterationTrace> },
    #[error("information matrix is not positive definite at iteration {0}")]
    Singular(usize),
}

/// An evaluation outcome paired with the sentence it scores.
#[derive(Debug, Clone, Copy)]
pub struct Joined<'a> {
    pub outcome: &'a EvaluationOutcome,
    pub sentence: &'a GeneratedSentence,
}

/// Attaches each outcome to its sentence; fails on the first orphan.
pub fn join_outcomes<'a>(
    outcomes: &'a [EvaluationOutcome],
    sentences: &'a [GeneratedSentence],
) -> Result<Vec<Joined<'a>>, StatsError> {
    let by_id: HashMap<&str, &GeneratedSentence> = sentences
        .iter()
        .map(|s| (s.sentence_id.as_str(), s))
        .collect();
    outcomes
        .iter()
        .map(|o| {
            by_id
                .get(o.sentence_id.as_str())
                .map(|s| Joined {
                    outcome: o,
                    sentence: s,
                })
                .ok_or_else(|| StatsError::Unjoined(o.sentence_id.clone()))
        })
        .collect()
}
