//! Occupation covariates (median income, female share, median age) and their
//! join onto same-gender outcomes for the regression.
//!
//! File format: CSV with header
//! `occupation_id,categories,median_income,pct_female,median_age`.
//! `categories` lists the official labour-statistics categories separated by
//! `;`. An empty cell is missing, never zero.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Lexicon, RelationshipType};
use crate::evaluator::EvaluationOutcome;
use crate::stats::{join_outcomes, AnalysisRow, StatsError};
use crate::GeneratedSentence;

const SHIPPED: &str = include_str!("../data/occupation_metadata.csv");

pub const METADATA_HEADER: [&str; 5] = [
    "occupation_id",
    "categories",
    "median_income",
    "pct_female",
    "median_age",
];

#[derive(Debug, Error)]
pub enum MetadataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("{origin} line {line}: occupation `{id}` is not in the lexicon")]
    UnknownOccupation {
        origin: String,
        line: u64,
        id: String,
    },
    #[error("{origin} line {line}: {field} for `{id}` is {value}, expected {range}")]
    OutOfRange {
        origin: String,
        line: u64,
        id: String,
        field: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("{origin} line {line}: duplicate occupation `{id}`")]
    Duplicate {
        origin: String,
        line: u64,
        id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationMetadata {
    pub occupation_id: String,
    pub category_labels: Vec<String>,
    pub median_income: Option<f64>,
    pub pct_female: Option<f64>,
    pub median_age: Option<f64>,
}

impl OccupationMetadata {
    pub fn is_complete(&self) -> bool {
        self.median_income.is_some() && self.pct_female.is_some() && self.median_age.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetadataTable {
    entries: BTreeMap<String, OccupationMetadata>,
}

fn parse_cell(cell: &str) -> Result<Option<f64>, String> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|_| format!("`{cell}` is not a number"))
}

impl MetadataTable {
    /// The covariate file bundled with the crate.
    pub fn shipped() -> MetadataTable {
        MetadataTable::from_reader(SHIPPED.as_bytes(), "<shipped metadata>", Some(&Lexicon::shipped()))
            .expect("shipped metadata is valid")
    }

    pub fn load(path: &Path, lexicon: &Lexicon) -> Result<MetadataTable, MetadataError> {
        let file = std::fs::File::open(path).map_err(|source| MetadataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        MetadataTable::from_reader(file, &path.display().to_string(), Some(lexicon))
    }

    /// Parses and validates; ids are checked against `lexicon` when given.
    pub fn from_reader<R: io::Read>(
        reader: R,
        origin: &str,
        lexicon: Option<&Lexicon>,
    ) -> Result<MetadataTable, MetadataError> {
        let parse_err = |message: String| MetadataError::Parse {
            origin: origin.to_string(),
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| parse_err(e.to_string()))?.clone();
        if header.iter().collect::<Vec<_>>() != METADATA_HEADER {
            return Err(parse_err(format!(
                "header must be `{}`, found `{}`",
                METADATA_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = BTreeMap::new();
        for record in rdr.records() {
            let record = record.map_err(|e| parse_err(e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line());
            let id = record[0].to_string();
            if lexicon.is_some_and(|lex| lex.occupation(&id).is_none()) {
                return Err(MetadataError::UnknownOccupation {
                    origin: origin.into(),
                    line,
                    id,
                });
            }
            let cell = |k: usize| {
                parse_cell(&record[k]).map_err(|m| parse_err(format!("line {line}: {m}")))
            };
            let entry = OccupationMetadata {
                category_labels: record[1]
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
                median_income: cell(2)?,
                pct_female: cell(3)?,
                median_age: cell(4)?,
                occupation_id: id.clone(),
            };
            let checks: [(&'static str, Option<f64>, fn(f64) -> bool, &'static str); 3] = [
                ("median_income", entry.median_income, |v| v > 0.0, "> 0"),
                ("pct_female", entry.pct_female, |v| (0.0..=100.0).contains(&v), "in [0, 100]"),
                ("median_age", entry.median_age, |v| v > 14.0 && v < 90.0, "in (14, 90)"),
            ];
            for (field, value, ok, range) in checks {
                if let Some(v) = value.filter(|v| !ok(*v)) {
                    return Err(MetadataError::OutOfRange {
                        origin: origin.into(),
                        line,
                        id,
                        field,
                        value: v,
                        range,
                    });
                }
            }
            if entries.insert(id.clone(), entry).is_some() {
                return Err(MetadataError::Duplicate {
                    origin: origin.into(),
                    line,
                    id,
                });
            }
        }
        Ok(MetadataTable { entries })
    }

    pub fn get(&self, occupation_id: &str) -> Option<&OccupationMetadata> {
        self.entries.get(occupation_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &OccupationMetadata> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Complete covariates for `occupation_id`, if any.
    pub fn covariates(&self, occupation_id: &str) -> Option<(f64, f64, f64)> {
        let m = self.get(occupation_id)?;
        Some((m.median_income?, m.pct_female?, m.median_age?))
    }
}

/// Regression rows plus bookkeeping for the report.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionInput {
    pub rows: Vec<AnalysisRow>,
    pub same_gender: usize,
    /// Same-gender outcomes dropped for missing covariates.
    pub dropped: usize,
    /// Occupations that lost rows, sorted.
    pub dropped_occupations: Vec<String>,
}

/// Same-gender outcomes with complete covariates, in outcome order.
/// Listwise deletion always considers all three covariates.
pub fn join_for_regression(
    outcomes: &[EvaluationOutcome],
    sentences: &[GeneratedSentence],
    metadata: &MetadataTable,
) -> Result<RegressionInput, StatsError> {
    let joined = join_outcomes(outcomes, sentences)?;
    let mut rows = Vec::new();
    let mut same_gender = 0;
    let mut dropped_occupations = Vec::new();
    for j in joined {
        let s = j.sentence;
        if s.relationship_type != RelationshipType::SameGender {
            continue;
        }
        same_gender += 1;
        match metadata.covariates(&s.occupation_id) {
            Some((income, female, age)) => rows.push(AnalysisRow {
                sentence_id: s.sentence_id.clone(),
                backend_id: j.outcome.backend_id.clone(),
                correct: j.outcome.correct,
                subject_gender: s.subject_gender,
                language: s.language,
                target_family: s.target_family,
                occupation_id: s.occupation_id.clone(),
                median_income: income,
                pct_female: female,
                median_age: age,
            }),
            None => dropped_occupations.push(s.occupation_id.clone()),
        }
    }
    let dropped = dropped_occupations.len();
    dropped_occupations.sort();
    dropped_occupations.dedup();
    if rows.is_empty() {
        log::warn!(
            "no regression rows: all {same_gender} same-gender outcomes lack complete occupation metadata"
        );
    } else if dropped > 0 {
        log::info!(
            "regression: kept {} of {same_gender} same-gender outcomes; dropped {dropped} with missing metadata",
            rows.len()
        );
    }
    Ok(RegressionInput {
        rows,
        same_gender,
        dropped,
        dropped_occupations,
    })
}
