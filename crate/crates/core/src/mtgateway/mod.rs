//! Translation backends and the cache-fronted batch driver.
//!
//! [`translate_batch`] consults the [`TranslationCache`] first, sends only
//! the misses to a [`Backend`], writes every success through to the cache
//! and returns results in input order.

pub mod cache;
pub mod http;
pub mod ratelimit;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{GeneratedSentence, Language, Lexicon};

pub use cache::TranslationCache;
pub use http::{HttpBackend, HttpResponse, HttpSettings, ReqwestTransport, Transport};
pub use ratelimit::{Clock, FakeClock, RateLimiter, RetryPolicy, SystemClock};
pub use synthetic::{synthetic_translate, FlipRule, SyntheticBackend, SyntheticBiasProfile};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub sentence_id: String,
    pub backend_id: String,
    pub source_language: Language,
    pub target_language: String,
    pub translation: String,
    pub retrieved_at: DateTime<Utc>,
    pub from_cache: bool,
}

pub const TRANSLATION_HEADER: [&str; 7] = [
    "sentence_id",
    "backend_id",
    "source_language",
    "target_language",
    "translation",
    "retrieved_at",
    "from_cache",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordFailure {
    pub sentence_id: String,
    pub message: String,
}

impl RecordFailure {
    pub fn new(sentence_id: &str, message: impl Into<String>) -> Self {
        RecordFailure {
            sentence_id: sentence_id.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for RecordFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.sentence_id, self.message)
    }
}

/// Failures that stop the whole run rather than a single record.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("quota exceeded: {0}")]
    QuotaExceeded(String),
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("translate_batch needs at least one sentence")]
    EmptyInput,
    #[error("backend `{backend}`: {message}")]
    Config { backend: String, message: String },
    #[error("backend `{backend}`: authentication: environment variable {variable} is not set")]
    MissingCredential { backend: String, variable: String },
    #[error("backend `{backend}` aborted after {completed} new translations: {message}")]
    QuotaExceeded {
        backend: String,
        completed: usize,
        message: String,
    },
    #[error("cache write failed: {0}")]
    Cache(#[from] std::io::Error),
}

pub trait Backend: Send + Sync {
    fn backend_id(&self) -> &str;

    /// Sentences sent per call to [`Backend::translate`].
    fn batch_size(&self) -> usize {
        1
    }

    /// Upper bound on concurrent calls to [`Backend::translate`].
    fn parallelism(&self) -> usize {
        1
    }

    /// One result per input, in order. `Err` aborts the run.
    fn translate(
        &self,
        batch: &[&GeneratedSentence],
    ) -> Result<Vec<Result<String, RecordFailure>>, BackendError>;
}

/// Serves only what is already cached; every miss is a record failure.
pub struct ReplayBackend {
    backend_id: String,
}

impl ReplayBackend {
    pub fn new(backend_id: impl Into<String>) -> Self {
        ReplayBackend {
            backend_id: backend_id.into(),
        }
    }
}

impl Backend for ReplayBackend {
    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn translate(
        &self,
        batch: &[&GeneratedSentence],
    ) -> Result<Vec<Result<String, RecordFailure>>, BackendError> {
        Ok(batch
            .iter()
            .map(|s| Err(RecordFailure::new(&s.sentence_id, "not present in replay cache")))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Synthetic,
    Replay,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http" => Ok(BackendKind::Http),
            "synthetic" => Ok(BackendKind::Synthetic),
            "replay" => Ok(BackendKind::Replay),
            other => Err(format!("unknown backend kind `{other}`")),
        }
    }
}

/// Per-backend settings as they appear in the run configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    // http
    pub endpoint: Option<String>,
    pub rate_limit_rps: Option<f64>,
    pub batch_size: Option<usize>,
    pub parallelism: Option<usize>,
    /// JSON text of the request body template.
    pub request_template: Option<String>,
    /// JSON text rendered once per sentence for `{items}`.
    pub item_template: Option<String>,
    pub response_path: Option<String>,
    pub auth_header: Option<String>,
    pub auth_prefix: Option<String>,
    pub timeout_secs: Option<u64>,
    /// Overrides for the language code sent as `{source}`.
    #[serde(default)]
    pub source_codes: BTreeMap<String, String>,
    // synthetic
    pub seed: Option<u64>,
    pub same_gender_rate: Option<f64>,
    pub different_gender_rate: Option<f64>,
    #[serde(default)]
    pub flip: Vec<FlipRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub backend_id: String,
    pub kind: BackendKind,
    pub config: BackendConfig,
}

/// `RELAUDIT_<BACKEND>_KEY`, with non-alphanumerics mapped to `_`.
pub fn default_credential_env(backend_id: &str) -> String {
    let upper: String = backend_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("RELAUDIT_{upper}_KEY")
}

impl BackendDescriptor {
    pub fn synthetic(backend_id: impl Into<String>, profile: &SyntheticBiasProfile) -> Self {
        BackendDescriptor {
            backend_id: backend_id.into(),
            kind: BackendKind::Synthetic,
            config: BackendConfig {
                seed: Some(profile.seed),
                same_gender_rate: Some(profile.same_gender_rate),
                different_gender_rate: Some(profile.different_gender_rate),
                flip: profile.rules.clone(),
                ..BackendConfig::default()
            },
        }
    }

    fn config_error(&self, message: impl Into<String>) -> GatewayError {
        GatewayError::Config {
            backend: self.backend_id.clone(),
            message: message.into(),
        }
    }

    pub fn credential_env(&self) -> String {
        default_credential_env(&self.backend_id)
    }

    pub fn synthetic_profile(&self) -> Result<SyntheticBiasProfile, GatewayError> {
        let seed = self
            .config
            .seed
            .ok_or_else(|| self.config_error("synthetic backend requires `seed`"))?;
        let same = self.config.same_gender_rate.ok_or_else(|| {
            self.config_error("synthetic backend requires a bias table (`same_gender_rate`)")
        })?;
        let profile = SyntheticBiasProfile {
            seed,
            same_gender_rate: same,
            different_gender_rate: self.config.different_gender_rate.unwrap_or(0.0),
            rules: self.config.flip.clone(),
        };
        profile.validate().map_err(|m| self.config_error(m))?;
        Ok(profile)
    }

    /// Static checks that do not need credentials or network.
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.backend_id.trim().is_empty() {
            return Err(self.config_error("backend id must not be empty"));
        }
        match self.kind {
            BackendKind::Http => {
                if self.config.endpoint.as_deref().is_none_or(str::is_empty) {
                    return Err(self.config_error("http backend requires `endpoint`"));
                }
                let template = self.request_template()?;
                if !http::template_has_text_slot(&template) {
                    return Err(self.config_error(
                        "request_template needs a \"{text}\", \"{texts}\" or \"{items}\" value",
                    ));
                }
                if self.config.batch_size.unwrap_or(1) > 1
                    && !http::template_supports_batches(&template)
                {
                    return Err(self.config_error(
                        "batch_size > 1 requires a \"{texts}\" or \"{items}\" placeholder",
                    ));
                }
                if self.config.batch_size == Some(0) || self.config.parallelism == Some(0) {
                    return Err(self.config_error("batch_size and parallelism must be at least 1"));
                }
                if let Some(rps) = self.config.rate_limit_rps {
                    if !(rps.is_finite() && rps > 0.0) {
                        return Err(self.config_error("rate_limit_rps must be positive"));
                    }
                }
                if self.config.response_path.as_deref().is_none_or(str::is_empty) {
                    return Err(self.config_error("http backend requires `response_path`"));
                }
                Ok(())
            }
            BackendKind::Synthetic => self.synthetic_profile().map(|_| ()),
            BackendKind::Replay => Ok(()),
        }
    }

    fn request_template(&self) -> Result<serde_json::Value, GatewayError> {
        let text = self
            .config
            .request_template
            .as_deref()
            .unwrap_or(r#"{"q": "{texts}", "source": "{source}", "target": "{target}"}"#);
        serde_json::from_str(text)
            .map_err(|e| self.config_error(format!("request_template is not valid JSON: {e}")))
    }

    /// Builds a runnable backend. HTTP backends read their API key from the
    /// environment here.
    pub fn build(
        &self,
        lexicon: Arc<Lexicon>,
        transport: Option<Arc<dyn Transport>>,
        clock: Arc<dyn Clock>,
    ) -> Result<Box<dyn Backend>, GatewayError> {
        self.validate()?;
        match self.kind {
            BackendKind::Synthetic => Ok(Box::new(SyntheticBackend::new(
                self.backend_id.clone(),
                self.synthetic_profile()?,
                lexicon,
            ))),
            BackendKind::Replay => Ok(Box::new(ReplayBackend::new(self.backend_id.clone()))),
            BackendKind::Http => {
                let variable = self.credential_env();
                let api_key = std::env::var(&variable)
                    .ok()
                    .filter(|k| !k.trim().is_empty())
                    .ok_or_else(|| GatewayError::MissingCredential {
                        backend: self.backend_id.clone(),
                        variable: variable.clone(),
                    })?;
                let item_template = self
                    .config
                    .item_template
                    .as_deref()
                    .map(serde_json::from_str)
                    .transpose()
                    .map_err(|e| self.config_error(format!("item_template: {e}")))?;
                let settings = HttpSettings {
                    endpoint: self.config.endpoint.clone().unwrap_or_default(),
                    api_key,
                    auth_header: self
                        .config
                        .auth_header
                        .clone()
                        .unwrap_or_else(|| "Authorization".into()),
                    auth_prefix: self
                        .config
                        .auth_prefix
                        .clone()
                        .unwrap_or_else(|| "Bearer ".into()),
                    rate_limit_rps: self.config.rate_limit_rps.unwrap_or(5.0),
                    batch_size: self.config.batch_size.unwrap_or(1),
                    parallelism: self.config.parallelism.unwrap_or(1),
                    request_template: self.request_template()?,
                    item_template,
                    response_path: self.config.response_path.clone().unwrap_or_default(),
                    source_codes: self.config.source_codes.clone(),
                };
                let transport = match transport {
                    Some(t) => t,
                    None => Arc::new(
                        ReqwestTransport::new(Duration::from_secs(
                            self.config.timeout_secs.unwrap_or(30),
                        ))
                        .map_err(|e| self.config_error(e))?,
                    ),
                };
                Ok(Box::new(HttpBackend::new(
                    self.backend_id.clone(),
                    settings,
                    transport,
                    clock,
                    RetryPolicy::default(),
                )))
            }
        }
    }
}

#[derive(Debug)]
pub struct BatchOutcome {
    pub results: Vec<Result<TranslationRecord, RecordFailure>>,
    pub cache_hits: usize,
    pub backend_calls: usize,
}

impl BatchOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &RecordFailure> {
        self.results.iter().filter_map(|r| r.as_ref().err())
    }

    pub fn records(&self) -> impl Iterator<Item = &TranslationRecord> {
        self.results.iter().filter_map(|r| r.as_ref().ok())
    }
}

/// Translates `sentences` to English through `backend`, cache first.
pub fn translate_batch(
    backend: &dyn Backend,
    cache: &TranslationCache,
    sentences: &[GeneratedSentence],
) -> Result<BatchOutcome, GatewayError> {
    if sentences.is_empty() {
        return Err(GatewayError::EmptyInput);
    }
    let backend_id = backend.backend_id().to_string();
    let mut results: Vec<Option<Result<TranslationRecord, RecordFailure>>> =
        vec![None; sentences.len()];
    let mut misses = Vec::new();
    for (i, s) in sentences.iter().enumerate() {
        match cache.get(&s.sentence_id, &backend_id) {
            Some(mut hit) => {
                hit.from_cache = true;
                results[i] = Some(Ok(hit));
            }
            None => misses.push(i),
        }
    }
    let cache_hits = sentences.len() - misses.len();

    let chunks: Vec<&[usize]> = misses.chunks(backend.batch_size().max(1)).collect();
    let next_chunk = AtomicUsize::new(0);
    let calls = AtomicUsize::new(0);
    let completed = AtomicUsize::new(0);
    let aborted = AtomicBool::new(false);
    let abort_message: Mutex<Option<String>> = Mutex::new(None);
    let cache_error: Mutex<Option<std::io::Error>> = Mutex::new(None);
    let fresh: Mutex<Vec<(usize, Result<TranslationRecord, RecordFailure>)>> =
        Mutex::new(Vec::with_capacity(misses.len()));

    let worker = || loop {
        if aborted.load(Ordering::SeqCst) {
            return;
        }
        let k = next_chunk.fetch_add(1, Ordering::SeqCst);
        let Some(chunk) = chunks.get(k) else { return };
        let batch: Vec<&GeneratedSentence> = chunk.iter().map(|&i| &sentences[i]).collect();
        calls.fetch_add(1, Ordering::SeqCst);
        let translated = match backend.translate(&batch) {
            Ok(t) => t,
            Err(BackendError::QuotaExceeded(m)) => {
                aborted.store(true, Ordering::SeqCst);
                abort_message.lock().unwrap().get_or_insert(m);
                return;
            }
        };
        let translated = if translated.len() == batch.len() {
            translated
        } else {
            let msg = format!(
                "backend returned {} results for {} sentences",
                translated.len(),
                batch.len()
            );
            batch
                .iter()
                .map(|s| Err(RecordFailure::new(&s.sentence_id, msg.clone())))
                .collect()
        };
        let mut local = Vec::with_capacity(chunk.len());
        for (&i, result) in chunk.iter().zip(translated) {
            let s = &sentences[i];
            let entry = result.map(|translation| TranslationRecord {
                sentence_id: s.sentence_id.clone(),
                backend_id: backend_id.clone(),
                source_language: s.language,
                target_language: "en".into(),
                translation,
                retrieved_at: Utc::now(),
                from_cache: false,
            });
            if let Ok(record) = &entry {
                if let Err(e) = cache.put(record) {
                    cache_error.lock().unwrap().get_or_insert(e);
                }
                completed.fetch_add(1, Ordering::SeqCst);
            }
            local.push((i, entry));
        }
        fresh.lock().unwrap().extend(local);
    };

    let workers = backend.parallelism().max(1).min(chunks.len());
    if workers <= 1 {
        worker();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(worker);
            }
        });
    }

    if let Some(e) = cache_error.into_inner().unwrap() {
        return Err(GatewayError::Cache(e));
    }
    if aborted.load(Ordering::SeqCst) {
        return Err(GatewayError::QuotaExceeded {
            backend: backend_id,
            completed: completed.load(Ordering::SeqCst),
            message: abort_message.into_inner().unwrap().unwrap_or_default(),
        });
    }
    for (i, entry) in fresh.into_inner().unwrap() {
        results[i] = Some(entry);
    }
    let results = results
        .into_iter()
        .zip(sentences)
        .map(|(r, s)| {
            r.unwrap_or_else(|| Err(RecordFailure::new(&s.sentence_id, "not translated")))
        })
        .collect::<Vec<_>>();
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed > 0 {
        warn!("{backend_id}: {failed} of {} sentences failed", sentences.len());
    }
    Ok(BatchOutcome {
        results,
        cache_hits,
        backend_calls: calls.into_inner(),
    })
}

pub fn write_translations<W: std::io::Write>(
    writer: W,
    records: &[TranslationRecord],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if records.is_empty() {
        w.write_record(TRANSLATION_HEADER)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_translations<R: std::io::Read>(reader: R) -> csv::Result<Vec<TranslationRecord>> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, Language};

    /// Wraps a backend and counts calls; optionally fails after a budget.
    struct Counting<B> {
        inner: B,
        calls: AtomicUsize,
        quota: Option<usize>,
        parallelism: usize,
    }

    impl<B: Backend> Backend for Counting<B> {
        fn backend_id(&self) -> &str {
            self.inner.backend_id()
        }
        fn batch_size(&self) -> usize {
            7
        }
        fn parallelism(&self) -> usize {
            self.parallelism
        }
        fn translate(
            &self,
            batch: &[&GeneratedSentence],
        ) -> Result<Vec<Result<String, RecordFailure>>, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if self.quota.is_some_and(|q| n >= q) {
                return Err(BackendError::QuotaExceeded("daily limit".into()));
            }
            self.inner.translate(batch)
        }
    }

    fn synthetic(rate: f64) -> SyntheticBackend {
        SyntheticBackend::new(
            "synthetic",
            SyntheticBiasProfile {
                same_gender_rate: rate,
                ..SyntheticBiasProfile::unbiased(11)
            },
            Arc::new(Lexicon::shipped()),
        )
    }

    fn counting(parallelism: usize, quota: Option<usize>) -> Counting<SyntheticBackend> {
        Counting {
            inner: synthetic(0.3),
            calls: AtomicUsize::new(0),
            quota,
            parallelism,
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        let cache = TranslationCache::in_memory();
        assert!(matches!(
            translate_batch(&synthetic(0.0), &cache, &[]),
            Err(GatewayError::EmptyInput)
        ));
    }

    #[test]
    fn results_preserve_input_order_under_parallelism() {
        let corpus = generate_corpus(&Lexicon::shipped(), Language::Spanish);
        let sample: Vec<_> = corpus.iter().rev().step_by(3).take(200).cloned().collect();
        let serial = translate_batch(&counting(1, None), &TranslationCache::in_memory(), &sample)
            .unwrap();
        let parallel = translate_batch(&counting(8, None), &TranslationCache::in_memory(), &sample)
            .unwrap();
        let ids: Vec<_> = parallel.records().map(|r| r.sentence_id.clone()).collect();
        let expected: Vec<_> = sample.iter().map(|s| s.sentence_id.clone()).collect();
        assert_eq!(ids, expected);
        let a: Vec<_> = serial.records().map(|r| &r.translation).collect();
        let b: Vec<_> = parallel.records().map(|r| &r.translation).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn fully_cached_rerun_makes_no_backend_calls() {
        let corpus = generate_corpus(&Lexicon::shipped(), Language::Spanish);
        let dir = tempfile::tempdir().unwrap();
        let cache = TranslationCache::open(dir.path()).unwrap();
        let first = counting(2, None);
        let out = translate_batch(&first, &cache, &corpus).unwrap();
        assert_eq!(out.cache_hits, 0);
        assert!(first.calls.load(Ordering::SeqCst) > 0);

        let reopened = TranslationCache::open(dir.path()).unwrap();
        let second = counting(2, None);
        let again = translate_batch(&second, &reopened, &corpus).unwrap();
        assert_eq!(second.calls.load(Ordering::SeqCst), 0);
        assert_eq!(again.backend_calls, 0);
        assert_eq!(again.cache_hits, corpus.len());
        assert!(again.records().all(|r| r.from_cache));
        let strip = |o: &BatchOutcome| {
            o.records()
                .map(|r| (r.sentence_id.clone(), r.translation.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&out), strip(&again));
    }

    #[test]
    fn quota_abort_keeps_partial_results_in_cache() {
        let corpus = generate_corpus(&Lexicon::shipped(), Language::Spanish);
        let sample = &corpus[..70];
        let dir = tempfile::tempdir().unwrap();
        let cache = TranslationCache::open(dir.path()).unwrap();
        let err = translate_batch(&counting(1, Some(3)), &cache, sample).unwrap_err();
        match err {
            GatewayError::QuotaExceeded { completed, .. } => assert_eq!(completed, 21),
            other => panic!("unexpected {other:?}"),
        }
        let reopened = TranslationCache::open(dir.path()).unwrap();
        assert_eq!(reopened.len(), 21);
        let resumed = counting(1, None);
        let out = translate_batch(&resumed, &reopened, sample).unwrap();
        assert_eq!(out.cache_hits, 21);
        assert_eq!(resumed.calls.load(Ordering::SeqCst), 7);
    }

    #[test]
    fn replay_misses_are_record_failures() {
        let corpus = generate_corpus(&Lexicon::shipped(), Language::Spanish);
        let cache = TranslationCache::in_memory();
        let out = translate_batch(&ReplayBackend::new("replay"), &cache, &corpus[..3]).unwrap();
        assert_eq!(out.failures().count(), 3);
    }

    #[test]
    fn descriptor_validation() {
        let mut d = BackendDescriptor {
            backend_id: "google".into(),
            kind: BackendKind::Http,
            config: BackendConfig::default(),
        };
        assert!(d.validate().unwrap_err().to_string().contains("endpoint"));
        d.config.endpoint = Some("https://mt.example".into());
        d.config.response_path = Some("data.translations.*.translatedText".into());
        d.validate().unwrap();
        d.config.request_template = Some(r#"{"q": "{text}"}"#.into());
        d.config.batch_size = Some(10);
        assert!(d.validate().unwrap_err().to_string().contains("batch_size"));

        let s = BackendDescriptor {
            backend_id: "syn".into(),
            kind: BackendKind::Synthetic,
            config: BackendConfig {
                same_gender_rate: Some(0.5),
                ..Default::default()
            },
        };
        assert!(s.validate().unwrap_err().to_string().contains("seed"));
    }

    #[test]
    fn missing_credential_is_reported_before_any_request() {
        let d = BackendDescriptor {
            backend_id: "no-key-backend".into(),
            kind: BackendKind::Http,
            config: BackendConfig {
                endpoint: Some("https://mt.example".into()),
                response_path: Some("text".into()),
                ..Default::default()
            },
        };
        assert_eq!(d.credential_env(), "RELAUDIT_NO_KEY_BACKEND_KEY");
        let err = d
            .build(
                Arc::new(Lexicon::shipped()),
                None,
                Arc::new(SystemClock::new()),
            )
            .err()
            .unwrap();
        assert!(matches!(err, GatewayError::MissingCredential { .. }), "{err}");
    }

    #[test]
    fn translations_file_header() {
        let mut buf = Vec::new();
        write_translations(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap().trim(),
            TRANSLATION_HEADER.join(",")
        );
    }
}
