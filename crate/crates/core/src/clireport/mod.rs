//! Pipeline orchestration behind the `relaudit` binary.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! corpus/{fr,it,es}.csv        generated sentences
//! translations.csv             English output per (sentence, backend)
//! translation_failures.csv     record-level failures, when any
//! outcomes.csv                 scored outcomes
//! analysis/accuracy_*.csv      one table per panel
//! analysis/mcnemar.csv         paired tests, pooled and per panel
//! analysis/regression.{txt,csv}
//! analysis/fig_*.svg           grouped bar charts
//! analysis/summary.txt
//! ```

pub mod config;
pub mod report;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

pub use config::{AnalysisOptions, RunConfig};
pub use report::AccuracyTable;

use crate::corpus::{
    generate_corpus, read_corpus_file, write_corpus_file, CorpusError, Gender, GeneratedSentence,
    Language, Lexicon, RelationshipType, TargetFamily,
};
use crate::evaluator::{evaluate, read_outcomes, write_outcomes, EvaluationOutcome};
use crate::metadata::{join_for_regression, MetadataError, MetadataTable};
use crate::mtgateway::{
    read_translations, translate_batch, write_translations, Clock, GatewayError, SystemClock,
    TranslationCache, TranslationRecord, Transport,
};
use crate::stats::{
    build_pairs, fit_regression, join_outcomes, mcnemar_by_stratum, stratified_accuracy,
    AnalysisRow, Dimension, Joined, McNemarRow, RegressionResult, RegressionSpec, StatsError,
    StratumKey,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_ANALYSIS: i32 = 4;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metadata(#[from] MetadataError),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("{} not found; run `relaudit {step}` first", .path.display())]
    MissingInput { path: PathBuf, step: &'static str },
    #[error("analysis error: {0}")]
    Analysis(String),
    #[error("{}: {message}", .path.display())]
    Io { path: PathBuf, message: String },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, e: impl fmt::Display) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Corpus(_) | PipelineError::Metadata(_) => {
                EXIT_CONFIG
            }
            PipelineError::Backend(_) => EXIT_BACKEND,
            PipelineError::MissingInput { .. }
            | PipelineError::Analysis(_)
            | PipelineError::Io { .. } => EXIT_ANALYSIS,
        }
    }
}

impl From<GatewayError> for PipelineError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Config { .. } => PipelineError::Config(e.to_string()),
            other => PipelineError::Backend(other.to_string()),
        }
    }
}

impl From<StatsError> for PipelineError {
    fn from(e: StatsError) -> Self {
        PipelineError::Analysis(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    /// (language, path, same-gender count, different-gender count)
    pub files: Vec<(Language, PathBuf, usize, usize)>,
}

impl fmt::Display for GenerateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (lang, path, same, diff) in &self.files {
            writeln!(
                f,
                "{lang}: {} sentences (same_gender {same}, different_gender {diff}) -> {}",
                same + diff,
                path.display()
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendTally {
    pub backend_id: String,
    pub translated: usize,
    pub cache_hits: usize,
    pub backend_calls: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslateSummary {
    pub backends: Vec<BackendTally>,
    pub path: PathBuf,
}

impl TranslateSummary {
    pub fn failures(&self) -> usize {
        self.backends.iter().map(|b| b.failures).sum()
    }

    pub fn backend_calls(&self) -> usize {
        self.backends.iter().map(|b| b.backend_calls).sum()
    }
}

impl fmt::Display for TranslateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.backends {
            writeln!(
                f,
                "{}: {} translations ({} cache hits, {} backend calls, {} failures)",
                b.backend_id, b.translated, b.cache_hits, b.backend_calls, b.failures
            )?;
        }
        writeln!(f, "-> {}", self.path.display())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateSummary {
    pub outcomes: usize,
    pub correct: usize,
    pub untranslated: usize,
    pub path: PathBuf,
}

impl fmt::Display for EvaluateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} outcomes, {} correct; {} sentences without a translation -> {}",
            self.outcomes,
            self.correct,
            self.untranslated,
            self.path.display()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeSummary {
    pub tables: Vec<AccuracyTable>,
    pub mcnemar: Vec<McNemarRow>,
    pub regression: Result<RegressionResult, String>,
    pub summary: String,
    pub dir: PathBuf,
}

impl fmt::Display for AnalyzeSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.summary)?;
        writeln!(f, "-> {}", self.dir.display())
    }
}

/// Grouping name → stratum dimensions (relationship type added for accuracy).
pub fn grouping_dimensions(name: &str) -> Vec<Dimension> {
    match name {
        "gender" => vec![Dimension::SubjectGender],
        "model" => vec![Dimension::Backend],
        "language" => vec![Dimension::Language],
        "occupation" => vec![Dimension::Occupation],
        _ => Vec::new(),
    }
}

pub struct Pipeline {
    pub config: RunConfig,
    lexicon: Arc<Lexicon>,
    metadata: MetadataTable,
    transport: Option<Arc<dyn Transport>>,
    clock: Arc<dyn Clock>,
}

fn read_csv_file<T>(
    path: &Path,
    step: &'static str,
    parse: impl FnOnce(std::fs::File) -> csv::Result<T>,
) -> Result<T, PipelineError> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            PipelineError::MissingInput {
                path: path.to_path_buf(),
                step,
            }
        } else {
            PipelineError::io(path, e)
        }
    })?;
    parse(file).map_err(|e| PipelineError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(path).map_err(|e| PipelineError::io(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    std::fs::write(path, contents).map_err(|e| PipelineError::io(path, e))
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Pipeline, PipelineError> {
        config.validate()?;
        let lexicon = match &config.lexicon_path {
            Some(p) => Lexicon::load(p)?,
            None => Lexicon::shipped(),
        };
        let metadata = match &config.metadata_path {
            Some(p) => MetadataTable::load(p, &lexicon)?,
            None => MetadataTable::shipped(),
        };
        Ok(Pipeline {
            config,
            lexicon: Arc::new(lexicon),
            metadata,
            transport: None,
            clock: Arc::new(SystemClock::new()),
        })
    }

    /// Routes every HTTP backend through `transport` instead of the network.
    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = Some(transport);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn metadata(&self) -> &MetadataTable {
        &self.metadata
    }

    pub fn corpus_path(&self, lang: Language) -> PathBuf {
        self.config.output_dir.join("corpus").join(format!("{}.csv", lang.code()))
    }

    pub fn translations_path(&self) -> PathBuf {
        self.config.output_dir.join("translations.csv")
    }

    pub fn failures_path(&self) -> PathBuf {
        self.config.output_dir.join("translation_failures.csv")
    }

    pub fn outcomes_path(&self) -> PathBuf {
        self.config.output_dir.join("outcomes.csv")
    }

    pub fn analysis_dir(&self) -> PathBuf {
        self.config.output_dir.join("analysis")
    }

    pub fn generate(&self) -> Result<GenerateSummary, PipelineError> {
        create_dir(&self.config.output_dir.join("corpus"))?;
        let mut files = Vec::new();
        for &lang in &self.config.languages {
            let corpus = generate_corpus(&self.lexicon, lang);
            if corpus.is_empty() {
                return Err(PipelineError::Config(format!(
                    "lexicon produces no sentences for {}",
                    lang.name()
                )));
            }
            let path = self.corpus_path(lang);
            write_corpus_file(&path, &corpus)?;
            let same = corpus
                .iter()
                .filter(|s| s.relationship_type == RelationshipType::SameGender)
                .count();
            files.push((lang, path, same, corpus.len() - same));
        }
        Ok(GenerateSummary { files })
    }

    /// Corpus sentences for the configured languages, in language order.
    pub fn load_corpus(&self) -> Result<Vec<GeneratedSentence>, PipelineError> {
        let mut all = Vec::new();
        for &lang in &self.config.languages {
            let path = self.corpus_path(lang);
            if !path.is_file() {
                return Err(PipelineError::MissingInput {
                    path,
                    step: "generate",
                });
            }
            all.extend(read_corpus_file(&path)?);
        }
        Ok(all)
    }

    pub fn translate(&self) -> Result<TranslateSummary, PipelineError> {
        let corpus = self.load_corpus()?;
        let cache = TranslationCache::open(&self.config.cache_dir)
            .map_err(|e| PipelineError::io(&self.config.cache_dir, e))?;
        let mut tallies = Vec::new();
        let mut records: Vec<TranslationRecord> = Vec::new();
        let mut failures = Vec::new();
        for descriptor in &self.config.backends {
            let backend =
                descriptor.build(self.lexicon.clone(), self.transport.clone(), self.clock.clone())?;
            let outcome = translate_batch(backend.as_ref(), &cache, &corpus)?;
            let failed: Vec<_> = outcome.failures().cloned().collect();
            tallies.push(BackendTally {
                backend_id: descriptor.backend_id.clone(),
                translated: outcome.records().count(),
                cache_hits: outcome.cache_hits,
                backend_calls: outcome.backend_calls,
                failures: failed.len(),
            });
            records.extend(outcome.records().cloned());
            failures.extend(failed.into_iter().map(|f| (descriptor.backend_id.clone(), f)));
        }
        let path = self.translations_path();
        let file = std::fs::File::create(&path).map_err(|e| PipelineError::io(&path, e))?;
        write_translations(file, &records).map_err(|e| PipelineError::io(&path, e))?;
        let fpath = self.failures_path();
        if failures.is_empty() {
            let _ = std::fs::remove_file(&fpath);
        } else {
            let mut w = csv::Writer::from_path(&fpath).map_err(|e| PipelineError::io(&fpath, e))?;
            w.write_record(["backend_id", "sentence_id", "message"])
                .map_err(|e| PipelineError::io(&fpath, e))?;
            for (b, f) in &failures {
                w.write_record([b, &f.sentence_id, &f.message])
                    .map_err(|e| PipelineError::io(&fpath, e))?;
            }
            w.flush().map_err(|e| PipelineError::io(&fpath, e))?;
        }
        Ok(TranslateSummary {
            backends: tallies,
            path,
        })
    }

    fn load_translations(&self) -> Result<Vec<TranslationRecord>, PipelineError> {
        read_csv_file(&self.translations_path(), "translate", read_translations)
    }

    pub fn evaluate(&self) -> Result<EvaluateSummary, PipelineError> {
        let corpus = self.load_corpus()?;
        let translations = self.load_translations()?;
        let by_id: HashMap<&str, &GeneratedSentence> =
            corpus.iter().map(|s| (s.sentence_id.as_str(), s)).collect();
        let backends = self.config.backend_ids();
        let mut outcomes = Vec::new();
        for record in &translations {
            if !backends.contains(&record.backend_id.as_str())
                || !self.config.languages.contains(&record.source_language)
            {
                continue;
            }
            let sentence = by_id.get(record.sentence_id.as_str()).ok_or_else(|| {
                PipelineError::Analysis(format!(
                    "translation for `{}` does not match any corpus sentence; rerun `relaudit generate` and `relaudit translate`",
                    record.sentence_id
                ))
            })?;
            outcomes.push(evaluate(record, sentence).map_err(|e| PipelineError::Analysis(e.to_string()))?);
        }
        let path = self.outcomes_path();
        let file = std::fs::File::create(&path).map_err(|e| PipelineError::io(&path, e))?;
        write_outcomes(file, &outcomes).map_err(|e| PipelineError::io(&path, e))?;
        Ok(EvaluateSummary {
            correct: outcomes.iter().filter(|o| o.correct).count(),
            outcomes: outcomes.len(),
            untranslated: corpus.len() * backends.len() - outcomes.len(),
            path,
        })
    }

    /// Outcomes restricted to the configured backends and languages.
    pub fn load_outcomes(
        &self,
        corpus: &[GeneratedSentence],
    ) -> Result<Vec<EvaluationOutcome>, PipelineError> {
        let all = read_csv_file(&self.outcomes_path(), "evaluate", read_outcomes)?;
        let ids: std::collections::HashSet<&str> =
            corpus.iter().map(|s| s.sentence_id.as_str()).collect();
        let backends = self.config.backend_ids();
        Ok(all
            .into_iter()
            .filter(|o| backends.contains(&o.backend_id.as_str()))
            .filter(|o| {
                ids.contains(o.sentence_id.as_str())
                    || !o
                        .sentence_id
                        .split('-')
                        .next()
                        .and_then(|c| c.parse::<Language>().ok())
                        .is_some_and(|l| !self.config.languages.contains(&l))
            })
            .collect())
    }

    pub fn analyze(&self) -> Result<AnalyzeSummary, PipelineError> {
        let corpus = self.load_corpus()?;
        let outcomes = self.load_outcomes(&corpus)?;
        if outcomes.is_empty() {
            return Err(PipelineError::Analysis(format!(
                "{} holds no outcomes for the configured backends; run `relaudit evaluate`",
                self.outcomes_path().display()
            )));
        }
        let joined = join_outcomes(&outcomes, &corpus)?;
        let dir = self.analysis_dir();
        create_dir(&dir)?;

        let mut tables = Vec::new();
        for name in &self.config.analysis.groupings {
            let mut dims = grouping_dimensions(name);
            dims.push(Dimension::RelationshipType);
            let key = StratumKey::new(dims.clone());
            let table = AccuracyTable {
                name: name.clone(),
                dimensions: dims,
                cells: stratified_accuracy(&joined, &key),
            };
            table.write_csv(&dir.join(AccuracyTable::file_name(name)))?;
            tables.push(table);
        }

        let pairs = build_pairs(&joined)?;
        let mut mcnemar = mcnemar_by_stratum("pooled", &pairs, &StratumKey::aggregate());
        for name in &self.config.analysis.groupings {
            let dims = grouping_dimensions(name);
            if !dims.is_empty() {
                mcnemar.extend(mcnemar_by_stratum(name, &pairs, &StratumKey::new(dims)));
            }
        }
        report::write_mcnemar_csv(&dir.join("mcnemar.csv"), &mcnemar)?;

        let regression = if self.config.analysis.regression {
            let input = join_for_regression(&outcomes, &corpus, &self.metadata)?;
            let header = format!(
                "Rows: {} of {} same-gender outcomes kept; {} dropped for missing occupation metadata ({})\n\n",
                input.rows.len(),
                input.same_gender,
                input.dropped,
                if input.dropped_occupations.is_empty() {
                    "none".to_string()
                } else {
                    input.dropped_occupations.join(", ")
                }
            );
            let fit = fit_regression(&self.config.analysis.spec, &input.rows);
            self.write_regression(&header, &fit)?;
            Some(fit.map_err(|e| e.to_string()))
        } else {
            let _ = std::fs::remove_file(dir.join("regression.txt"));
            let _ = std::fs::remove_file(dir.join("regression.csv"));
            None
        };

        let summary = self.report()?;
        Ok(AnalyzeSummary {
            tables,
            mcnemar,
            regression: regression.unwrap_or_else(|| Err("regression disabled".into())),
            summary,
            dir,
        })
    }

    fn write_regression(
        &self,
        header: &str,
        fit: &Result<RegressionResult, StatsError>,
    ) -> Result<(), PipelineError> {
        let dir = self.analysis_dir();
        create_dir(&dir)?;
        let txt = dir.join("regression.txt");
        let csv_path = dir.join("regression.csv");
        match fit {
            Ok(result) => {
                write_file(&txt, &format!("{header}{}", result.to_text()))?;
                let file =
                    std::fs::File::create(&csv_path).map_err(|e| PipelineError::io(&csv_path, e))?;
                result
                    .write_csv(file)
                    .map_err(|e| PipelineError::io(&csv_path, e))?;
            }
            Err(e) => {
                log::warn!("regression skipped: {e}");
                write_file(&txt, &format!("{header}Regression skipped: {e}\n"))?;
                let _ = std::fs::remove_file(&csv_path);
            }
        }
        Ok(())
    }

    /// Fits the regression on externally supplied rows (see
    /// [`load_regression_rows`]) and writes the regression report.
    pub fn analyze_regression_file(&self, path: &Path) -> Result<RegressionResult, PipelineError> {
        let (rows, dropped) = load_regression_rows(path, &self.metadata)?;
        let header = format!(
            "Rows: {} from {}; {} dropped for missing occupation covariates\n\n",
            rows.len(),
            path.display(),
            dropped
        );
        let fit = fit_regression(&self.config.analysis.spec, &rows);
        self.write_regression(&header, &fit)?;
        fit.map_err(PipelineError::from)
    }

    /// Renders charts and `summary.txt` from the analysis tables on disk.
    pub fn report(&self) -> Result<String, PipelineError> {
        let dir = self.analysis_dir();
        let mut tables = Vec::new();
        for name in &self.config.analysis.groupings {
            let path = dir.join(AccuracyTable::file_name(name));
            if !path.is_file() {
                return Err(PipelineError::MissingInput {
                    path,
                    step: "analyze",
                });
            }
            tables.push(AccuracyTable::read_csv(name, &path)?);
        }
        let mpath = dir.join("mcnemar.csv");
        if !mpath.is_file() {
            return Err(PipelineError::MissingInput {
                path: mpath,
                step: "analyze",
            });
        }
        let mcnemar = report::read_mcnemar_csv(&mpath)?;
        let regression = std::fs::read_to_string(dir.join("regression.txt")).ok();
        report::write_charts(&dir, &tables, self.config.analysis.top_k)?;
        let summary = report::render_summary(
            &tables,
            &mcnemar,
            regression.as_deref(),
            self.config.analysis.top_k,
        );
        write_file(&dir.join("summary.txt"), &summary)?;
        Ok(summary)
    }

    /// Sentence-level rows behind one stratum, e.g.
    /// `backend=amazon,occupation=judge,relationship_type=same_gender`.
    pub fn explain(&self, filter: &str) -> Result<String, PipelineError> {
        let filter = StratumKey::parse_filter(filter).map_err(PipelineError::Config)?;
        let corpus = self.load_corpus()?;
        let outcomes = self.load_outcomes(&corpus)?;
        let joined = join_outcomes(&outcomes, &corpus)?;
        let translations: HashMap<(String, String), String> = self
            .load_translations()
            .unwrap_or_default()
            .into_iter()
            .map(|r| ((r.sentence_id, r.backend_id), r.translation))
            .collect();
        let matching: Vec<&Joined<'_>> = joined
            .iter()
            .filter(|j| filter.iter().all(|(d, v)| d.value(j) == *v))
            .collect();
        let mut w = csv::WriterBuilder::new()
            .delimiter(b'\t')
            .from_writer(Vec::new());
        let io = |e: csv::Error| PipelineError::Analysis(e.to_string());
        w.write_record([
            "sentence_id",
            "backend_id",
            "source",
            "translation",
            "extracted_pronoun",
            "extraction_method",
            "correct",
        ])
        .map_err(io)?;
        for j in &matching {
            let key = (j.outcome.sentence_id.clone(), j.outcome.backend_id.clone());
            w.write_record([
                j.outcome.sentence_id.as_str(),
                j.outcome.backend_id.as_str(),
                j.sentence.text.as_str(),
                translations.get(&key).map_or("", String::as_str),
                j.outcome.extracted_pronoun.as_str(),
                j.outcome.extraction_method.as_str(),
                if j.outcome.correct { "true" } else { "false" },
            ])
            .map_err(io)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| PipelineError::Analysis(e.to_string()))?)
            .unwrap_or_default();
        let correct = matching.iter().filter(|j| j.outcome.correct).count();
        let accuracy = if matching.is_empty() {
            "n/a".to_string()
        } else {
            format!("{:.4}", correct as f64 / matching.len() as f64)
        };
        Ok(format!(
            "{body}# {} outcomes, {correct} correct, accuracy {accuracy}\n",
            matching.len()
        ))
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "correct" => Ok(true),
        "0" | "false" | "no" | "incorrect" => Ok(false),
        other => Err(format!("`{other}` is not a boolean")),
    }
}

fn parse_family(s: &str) -> Result<TargetFamily, String> {
    let norm: String = s
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    match norm.as_str() {
        "fiance" | "fiancee" | "fiancee_" | "fiancie" | "fiancé" => Ok(TargetFamily::Fiance),
        "boygirlfriend" | "girlboyfriend" => Ok(TargetFamily::BoyGirlfriend),
        "husbandwife" | "wifehusband" => Ok(TargetFamily::HusbandWife),
        _ if s.to_lowercase().starts_with("fianc") => Ok(TargetFamily::Fiance),
        _ => Err(format!("unknown relationship target `{s}`")),
    }
}

/// Reads externally produced same-gender outcomes for the regression.
///
/// Required columns: `backend_id`, `language` (fr/it/es), `subject_gender`
/// (female/male or F/M), `target_family` (fiance, boygirlfriend, husbandwife)
/// and `correct` (true/false or 1/0). Covariates come from the columns
/// `median_income`, `pct_female` and `median_age` when all three are present,
/// otherwise from `occupation_id` looked up in `metadata`. Rows with any
/// missing covariate are dropped; the count is returned alongside the rows.
pub fn load_regression_rows(
    path: &Path,
    metadata: &MetadataTable,
) -> Result<(Vec<AnalysisRow>, usize), PipelineError> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| PipelineError::io(path, e))?;
    let header = r.headers().map_err(|e| PipelineError::io(path, e))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let bad = |line: u64, m: String| {
        PipelineError::Analysis(format!("{} line {line}: {m}", path.display()))
    };
    let mut required = BTreeMap::new();
    for name in ["backend_id", "language", "subject_gender", "target_family", "correct"] {
        required.insert(
            name,
            col(name).ok_or_else(|| bad(1, format!("missing column `{name}`")))?,
        );
    }
    let covariate_cols = match (col("median_income"), col("pct_female"), col("median_age")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let occ_col = col("occupation_id");
    if covariate_cols.is_none() && occ_col.is_none() {
        return Err(bad(
            1,
            "need either `occupation_id` or all of `median_income`, `pct_female`, `median_age`".into(),
        ));
    }
    let id_col = col("sentence_id");
    let mut rows = Vec::new();
    let mut dropped = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| PipelineError::io(path, e))?;
        let line = rec.position().map_or(i as u64 + 2, |p| p.line());
        let get = |name: &str| &rec[required[name]];
        let occupation_id = occ_col.map(|c| rec[c].to_string()).unwrap_or_default();
        let num = |c: usize| -> Result<Option<f64>, PipelineError> {
            let v = rec[c].trim();
            if v.is_empty() || v.eq_ignore_ascii_case("na") {
                Ok(None)
            } else {
                v.parse().map(Some).map_err(|_| bad(line, format!("`{v}` is not a number")))
            }
        };
        let covariates = match covariate_cols {
            Some((a, b, c)) => match (num(a)?, num(b)?, num(c)?) {
                (Some(a), Some(b), Some(c)) => Some((a, b, c)),
                _ => None,
            },
            None => metadata.covariates(&occupation_id),
        };
        let Some((income, female, age)) = covariates else {
            dropped += 1;
            continue;
        };
        rows.push(AnalysisRow {
            sentence_id: id_col.map_or_else(|| format!("row-{line}"), |c| rec[c].to_string()),
            backend_id: get("backend_id").to_ascii_lowercase(),
            correct: parse_bool(get("correct")).map_err(|m| bad(line, m))?,
            subject_gender: get("subject_gender")
                .parse::<Gender>()
                .map_err(|m| bad(line, m))?,
            language: get("language").parse::<Language>().map_err(|m| bad(line, m))?,
            target_family: parse_family(get("target_family")).map_err(|m| bad(line, m))?,
            occupation_id,
            median_income: income,
            pct_female: female,
            median_age: age,
        });
    }
    Ok((rows, dropped))
}

/// Runs every step. Returns the analysis summary and whether any record
/// failed during translation.
pub fn run_all(pipeline: &Pipeline) -> Result<(String, bool), PipelineError> {
    let mut out = String::new();
    out.push_str(&pipeline.generate()?.to_string());
    let t = pipeline.translate()?;
    out.push_str(&t.to_string());
    out.push_str(&pipeline.evaluate()?.to_string());
    out.push_str(&pipeline.analyze()?.to_string());
    Ok((out, t.failures() > 0))
}

/// Regression spec used when none is configured.
pub fn default_regression_spec() -> RegressionSpec {
    RegressionSpec::default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_in(dir: &Path) -> Pipeline {
        let mut cfg = RunConfig::demo();
        cfg.apply_overrides(None, Some(&[Language::Spanish]), None, Some(dir))
            .unwrap();
        Pipeline::new(cfg).unwrap()
    }

    #[test]
    fn steps_require_their_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let p = demo_in(dir.path());
        let err = p.translate().unwrap_err();
        assert!(err.to_string().contains("relaudit generate"), "{err}");
        p.generate().unwrap();
        let err = p.evaluate().unwrap_err();
        assert!(err.to_string().contains("relaudit translate"), "{err}");
        let err = p.analyze().unwrap_err();
        assert!(err.to_string().contains("outcomes.csv"), "{err}");
        assert!(err.to_string().contains("relaudit evaluate"), "{err}");
        assert_eq!(err.exit_code(), EXIT_ANALYSIS);
        let err = p.report().unwrap_err();
        assert!(err.to_string().contains("relaudit analyze"), "{err}");
    }

    #[test]
    fn regression_rows_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        std::fs::write(
            &path,
            "backend_id,language,occupation_id,subject_gender,target_family,correct\n\
             Amazon,es,lawyer,F,Husband/wife,1\n\
             google,it,president,male,fiance,0\n\
             google,fr,nanny,M,boygirlfriend,false\n",
        )
        .unwrap();
        let (rows, dropped) = load_regression_rows(&path, &MetadataTable::shipped()).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].backend_id, "amazon");
        assert_eq!(rows[0].target_family, TargetFamily::HusbandWife);
        assert_eq!(rows[0].median_income, 131501.0);
        assert!(!rows[1].correct);
        assert_eq!(rows[1].subject_gender, Gender::Male);
    }
}
