//! Run configuration (TOML).
//!
//! ```toml
//! languages = ["fr", "it", "es"]
//! seed = 42
//! output_dir = "relaudit-out"
//!
//! [analysis]
//! regression = true
//!
//! [backends.amazon]
//! kind = "synthetic"
//! same_gender_rate = 0.49
//!
//! [backends.deepl]
//! kind = "http"
//! endpoint = "https://api.example.com/translate"
//! response_path = "translations.*.text"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::PipelineError;
use crate::corpus::Language;
use crate::mtgateway::{BackendConfig, BackendDescriptor, BackendKind, FlipRule};
use crate::stats::RegressionSpec;
use crate::RelationshipType;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    /// Panels to emit: aggregate, gender, model, language, occupation.
    pub groupings: Vec<String>,
    pub regression: bool,
    /// Occupations shown in each of the lowest/highest panels.
    pub top_k: usize,
    #[serde(rename = "regression_spec")]
    pub spec: RegressionSpec,
}

pub const GROUPINGS: [&str; 5] = ["aggregate", "gender", "model", "language", "occupation"];

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            groupings: GROUPINGS.iter().map(|s| s.to_string()).collect(),
            regression: true,
            top_k: 10,
            spec: RegressionSpec::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "all_languages")]
    languages: Vec<Language>,
    seed: Option<u64>,
    lexicon_path: Option<PathBuf>,
    metadata_path: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    analysis: AnalysisOptions,
    #[serde(default)]
    backends: BTreeMap<String, toml::Table>,
}

fn all_languages() -> Vec<Language> {
    Language::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub languages: Vec<Language>,
    /// Default seed for synthetic backends that do not set their own.
    pub seed: Option<u64>,
    pub backends: Vec<BackendDescriptor>,
    /// `None` means the bundled lexicon.
    pub lexicon_path: Option<PathBuf>,
    /// `None` means the bundled metadata.
    pub metadata_path: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    pub analysis: AnalysisOptions,
}

fn config_err(message: impl Into<String>) -> PipelineError {
    PipelineError::Config(message.into())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<RunConfig, PipelineError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| config_err(format!("invalid config: {e}")))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };
        let mut backends = Vec::new();
        for (id, mut table) in raw.backends {
            let kind = match table.remove("kind") {
                Some(toml::Value::String(k)) => k
                    .parse::<BackendKind>()
                    .map_err(|e| config_err(format!("backend `{id}`: {e}")))?,
                Some(_) => return Err(config_err(format!("backend `{id}`: `kind` must be a string"))),
                None => {
                    return Err(config_err(format!(
                        "backend `{id}`: missing `kind` (http, synthetic or replay)"
                    )))
                }
            };
            let mut config: BackendConfig = toml::Value::Table(table)
                .try_into()
                .map_err(|e| config_err(format!("backend `{id}`: {e}")))?;
            if kind == BackendKind::Synthetic && config.seed.is_none() {
                config.seed = raw.seed;
            }
            backends.push(BackendDescriptor {
                backend_id: id,
                kind,
                config,
            });
        }
        let output_dir = resolve(raw.output_dir.unwrap_or_else(|| "relaudit-out".into()));
        let config = RunConfig {
            languages: raw.languages,
            seed: raw.seed,
            backends,
            lexicon_path: raw.lexicon_path.map(resolve),
            metadata_path: raw.metadata_path.map(resolve),
            cache_dir: raw
                .cache_dir
                .map(resolve)
                .unwrap_or_else(|| output_dir.join("cache")),
            output_dir,
            analysis: raw.analysis,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<RunConfig, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_toml_str(&text, base)
    }

    /// Three synthetic backends whose same-gender flip rates loosely follow
    /// the per-model ordering reported for commercial systems, plus the two
    /// occupation overrides used in the worked example.
    pub fn demo() -> RunConfig {
        let seed = 42;
        let occupation = |id: &str, rate: f64| FlipRule {
            relationship_type: Some(RelationshipType::SameGender),
            subject_gender: None,
            language: None,
            occupation_id: Some(id.into()),
            rate,
        };
        let backend = |id: &str, rate: f64| BackendDescriptor {
            backend_id: id.into(),
            kind: BackendKind::Synthetic,
            config: BackendConfig {
                seed: Some(seed),
                same_gender_rate: Some(rate),
                different_gender_rate: Some(0.0),
                flip: vec![occupation("judge", 0.85), occupation("athlete", 0.34)],
                ..BackendConfig::default()
            },
        };
        let output_dir = PathBuf::from("relaudit-out");
        RunConfig {
            languages: Language::ALL.to_vec(),
            seed: Some(seed),
            backends: vec![
                backend("amazon", 0.49),
                backend("google", 0.62),
                backend("microsoft", 0.78),
            ],
            lexicon_path: None,
            metadata_path: None,
            cache_dir: output_dir.join("cache"),
            output_dir,
            analysis: AnalysisOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.languages.is_empty() {
            return Err(config_err("`languages` must list at least one of fr, it, es"));
        }
        let mut seen = self.languages.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.languages.len() {
            return Err(config_err("`languages` contains duplicates"));
        }
        if self.backends.is_empty() {
            return Err(config_err("at least one backend must be configured under [backends.<id>]"));
        }
        for b in &self.backends {
            b.validate().map_err(|e| config_err(e.to_string()))?;
        }
        for g in &self.analysis.groupings {
            if !GROUPINGS.contains(&g.as_str()) {
                return Err(config_err(format!(
                    "unknown grouping `{g}` (expected one of {})",
                    GROUPINGS.join(", ")
                )));
            }
        }
        for (what, path) in [
            ("lexicon_path", &self.lexicon_path),
            ("metadata_path", &self.metadata_path),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(config_err(format!("{what} {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    /// Applies command-line overrides. `--seed` replaces every synthetic seed.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        languages: Option<&[Language]>,
        backends: Option<&[String]>,
        out: Option<&Path>,
    ) -> Result<(), PipelineError> {
        if let Some(seed) = seed {
            self.seed = Some(seed);
            for b in &mut self.backends {
                if b.kind == BackendKind::Synthetic {
                    b.config.seed = Some(seed);
                }
            }
        }
        if let Some(langs) = languages {
            self.languages = langs.to_vec();
        }
        if let Some(ids) = backends {
            for id in ids {
                if !self.backends.iter().any(|b| &b.backend_id == id) {
                    return Err(config_err(format!("--backends: `{id}` is not configured")));
                }
            }
            self.backends.retain(|b| ids.contains(&b.backend_id));
        }
        if let Some(out) = out {
            if self.cache_dir == self.output_dir.join("cache") {
                self.cache_dir = out.join("cache");
            }
            self.output_dir = out.to_path_buf();
        }
        self.validate()
    }

    pub fn backend_ids(&self) -> Vec<&str> {
        self.backends.iter().map(|b| b.backend_id.as_str()).collect()
    }
}
