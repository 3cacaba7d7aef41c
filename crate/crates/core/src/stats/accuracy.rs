use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::Joined;

/// A column outcomes can be grouped by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    RelationshipType,
    SubjectGender,
    Backend,
    Language,
    Occupation,
    TargetFamily,
}

impl Dimension {
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::RelationshipType => "relationship_type",
            Dimension::SubjectGender => "subject_gender",
            Dimension::Backend => "backend_id",
            Dimension::Language => "language",
            Dimension::Occupation => "occupation_id",
            Dimension::TargetFamily => "target_family",
        }
    }

    pub fn value(self, j: &Joined<'_>) -> String {
        match self {
            Dimension::RelationshipType => j.sentence.relationship_type.to_string(),
            Dimension::SubjectGender => j.sentence.subject_gender.to_string(),
            Dimension::Backend => j.outcome.backend_id.clone(),
            Dimension::Language => j.sentence.language.to_string(),
            Dimension::Occupation => j.sentence.occupation_id.clone(),
            Dimension::TargetFamily => j.sentence.target_family.to_string(),
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "relationship_type" | "relationship" => Dimension::RelationshipType,
            "subject_gender" | "gender" => Dimension::SubjectGender,
            "backend_id" | "backend" | "model" => Dimension::Backend,
            "language" => Dimension::Language,
            "occupation_id" | "occupation" => Dimension::Occupation,
            "target_family" | "target" => Dimension::TargetFamily,
            other => return Err(format!("unknown stratum dimension `{other}`")),
        })
    }
}

/// Ordered set of dimensions; the empty key is the aggregate.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct StratumKey(Vec<Dimension>);

impl StratumKey {
    pub fn new(dims: impl IntoIterator<Item = Dimension>) -> Self {
        let mut v: Vec<Dimension> = Vec::new();
        for d in dims {
            if !v.contains(&d) {
                v.push(d);
            }
        }
        StratumKey(v)
    }

    pub fn aggregate() -> Self {
        StratumKey(Vec::new())
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.0
    }

    pub fn values(&self, j: &Joined<'_>) -> Vec<String> {
        self.0.iter().map(|d| d.value(j)).collect()
    }

    /// `dim=value,dim=value` filter syntax used by `--explain`.
    pub fn parse_filter(text: &str) -> Result<Vec<(Dimension, String)>, String> {
        text.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|part| {
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| format!("expected dim=value, got `{part}`"))?;
                Ok((k.trim().parse()?, v.trim().to_string()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyCell {
    pub stratum: Vec<(Dimension, String)>,
    pub n: usize,
    pub n_correct: usize,
    pub accuracy: f64,
}

impl AccuracyCell {
    pub fn value(&self, dim: Dimension) -> Option<&str> {
        self.stratum
            .iter()
            .find(|(d, _)| *d == dim)
            .map(|(_, v)| v.as_str())
    }
}

/// One cell per occupied stratum, ordered by stratum values.
pub fn stratified_accuracy(joined: &[Joined<'_>], key: &StratumKey) -> Vec<AccuracyCell> {
    let mut counts: BTreeMap<Vec<String>, (usize, usize)> = BTreeMap::new();
    for j in joined {
        let c = counts.entry(key.values(j)).or_default();
        c.0 += 1;
        c.1 += usize::from(j.outcome.correct);
    }
    counts
        .into_iter()
        .map(|(values, (n, n_correct))| AccuracyCell {
            stratum: key.dimensions().iter().copied().zip(values).collect(),
            n,
            n_correct,
            accuracy: n_correct as f64 / n as f64,
        })
        .collect()
}
