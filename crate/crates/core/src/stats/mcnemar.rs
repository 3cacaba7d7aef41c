use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::accuracy::{Dimension, StratumKey};
use super::{Joined, StatsError};
use crate::corpus::RelationshipType;

/// Above this many discordant pairs the chi-square approximation is used.
pub const EXACT_LIMIT: u64 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum McNemarMethod {
    ExactBinomial,
    ChiSquareCC,
}

impl McNemarMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            McNemarMethod::ExactBinomial => "exact_binomial",
            McNemarMethod::ChiSquareCC => "chi_square_cc",
        }
    }
}

/// `b` counts pairs with the same-gender sentence correct and its
/// different-gender partner incorrect; `c` the reverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McNemarResult {
    pub b: u64,
    pub c: u64,
    pub statistic: f64,
    pub p_value: f64,
    pub method: McNemarMethod,
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

pub fn mcnemar_from_counts(b: u64, c: u64) -> McNemarResult {
    let n = b + c;
    if n <= EXACT_LIMIT {
        // Integer tail sum, exact for n ≤ 25.
        let tail: u64 = (0..=b.min(c)).map(|k| binomial(n, k)).sum();
        let p = (2.0 * tail as f64 / (1u64 << n) as f64).min(1.0);
        McNemarResult {
            b,
            c,
            statistic: b.min(c) as f64,
            p_value: p,
            method: McNemarMethod::ExactBinomial,
        }
    } else {
        let d = (b as f64 - c as f64).abs() - 1.0;
        let statistic = d * d / n as f64;
        McNemarResult {
            b,
            c,
            statistic,
            p_value: chi_square_1_upper(statistic),
            method: McNemarMethod::ChiSquareCC,
        }
    }
}

/// Upper tail of chi-square with one degree of freedom.
pub fn chi_square_1_upper(x: f64) -> f64 {
    statrs::function::erf::erfc((x / 2.0).sqrt())
}

/// A same-gender outcome and its different-gender partner from the same backend.
#[derive(Debug, Clone, Copy)]
pub struct OutcomePair<'a> {
    pub same: Joined<'a>,
    pub diff: Joined<'a>,
}

impl OutcomePair<'_> {
    pub fn as_bools(&self) -> (bool, bool) {
        (self.same.outcome.correct, self.diff.outcome.correct)
    }
}

pub fn mcnemar(pairs: &[(bool, bool)]) -> McNemarResult {
    let b = pairs.iter().filter(|&&(s, d)| s && !d).count() as u64;
    let c = pairs.iter().filter(|&&(s, d)| !s && d).count() as u64;
    mcnemar_from_counts(b, c)
}

/// Matches every outcome with the partner differing only in target gender.
/// Output follows the order of the same-gender outcomes.
pub fn build_pairs<'a>(joined: &[Joined<'a>]) -> Result<Vec<OutcomePair<'a>>, StatsError> {
    let mut diff: HashMap<(String, String), Joined<'a>> = HashMap::new();
    for j in joined {
        if j.sentence.relationship_type == RelationshipType::DifferentGender {
            diff.insert(
                (j.outcome.sentence_id.clone(), j.outcome.backend_id.clone()),
                *j,
            );
        }
    }
    let mut pairs = Vec::new();
    for j in joined {
        if j.sentence.relationship_type != RelationshipType::SameGender {
            continue;
        }
        let partner_id = j.sentence.partner_id();
        match diff.remove(&(partner_id.clone(), j.outcome.backend_id.clone())) {
            Some(d) => pairs.push(OutcomePair { same: *j, diff: d }),
            None => {
                return Err(StatsError::UnmatchedPair {
                    sentence_id: j.outcome.sentence_id.clone(),
                    backend_id: j.outcome.backend_id.clone(),
                    partner_id,
                })
            }
        }
    }
    if let Some(orphan) = diff.values().min_by_key(|j| (&j.outcome.sentence_id, &j.outcome.backend_id)) {
        return Err(StatsError::UnmatchedPair {
            sentence_id: orphan.outcome.sentence_id.clone(),
            backend_id: orphan.outcome.backend_id.clone(),
            partner_id: orphan.sentence.partner_id(),
        });
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McNemarRow {
    /// Grouping name, `pooled` for the whole run.
    pub grouping: String,
    pub stratum: Vec<(Dimension, String)>,
    pub n_pairs: usize,
    pub result: McNemarResult,
}

/// One test per stratum of `key`, evaluated over the same-gender sentence's
/// attributes. `relationship_type` in the key is ignored since every pair
/// spans both values.
pub fn mcnemar_by_stratum(
    grouping: &str,
    pairs: &[OutcomePair<'_>],
    key: &StratumKey,
) -> Vec<McNemarRow> {
    let dims: Vec<Dimension> = key
        .dimensions()
        .iter()
        .copied()
        .filter(|d| *d != Dimension::RelationshipType)
        .collect();
    let mut groups: BTreeMap<Vec<String>, Vec<(bool, bool)>> = BTreeMap::new();
    for p in pairs {
        let values = dims.iter().map(|d| d.value(&p.same)).collect();
        groups.entry(values).or_default().push(p.as_bools());
    }
    groups
        .into_iter()
        .map(|(values, bools)| McNemarRow {
            grouping: grouping.to_string(),
            stratum: dims.iter().copied().zip(values).collect(),
            n_pairs: bools.len(),
            result: mcnemar(&bools),
        })
        .collect()
}
