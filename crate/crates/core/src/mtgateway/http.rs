//! Generic JSON-over-HTTP translation client.
//!
//! Vendors differ only in endpoint, auth header and JSON shape, so each one
//! is described by configuration: a request body template with placeholders
//! and a dotted path that locates the translations in the response.
//!
//! Request template placeholders (inside JSON string values):
//!
//! * `"{texts}"` as a whole value: replaced by the array of source texts.
//! * `"{items}"` as a whole value: replaced by one rendered `item_template`
//!   per source text.
//! * `"{text}"` as a whole value: the single source text (batch size 1).
//! * `{source}` / `{target}` anywhere in a string: language codes.
//!
//! Response paths are dot-separated keys; numeric segments index arrays and
//! `*` maps over every element, e.g. `data.translations.*.translatedText`.

use std::sync::Arc;
use std::time::Duration;

use log::{debug, warn};
use serde_json::Value;

use super::ratelimit::{Clock, RateLimiter, RetryPolicy};
use super::{Backend, BackendError, RecordFailure};
use crate::corpus::GeneratedSentence;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Sends one POST request. Errors are connection-level failures.
pub trait Transport: Send + Sync {
    fn post(&self, url: &str, headers: &[(String, String)], body: &str)
        -> Result<HttpResponse, String>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
    ) -> Result<HttpResponse, String> {
        let mut req = self
            .client
            .post(url)
            .header("Content-Type", "application/json")
            .body(body.to_string());
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub endpoint: String,
    pub api_key: String,
    pub auth_header: String,
    pub auth_prefix: String,
    pub rate_limit_rps: f64,
    pub batch_size: usize,
    pub parallelism: usize,
    pub request_template: Value,
    pub item_template: Option<Value>,
    pub response_path: String,
    pub source_codes: std::collections::BTreeMap<String, String>,
}

pub struct HttpBackend {
    backend_id: String,
    settings: HttpSettings,
    transport: Arc<dyn Transport>,
    limiter: RateLimiter,
    clock: Arc<dyn Clock>,
    retry: RetryPolicy,
}

enum Attempt {
    Done(Vec<Result<String, RecordFailure>>),
    Transient(String),
    Quota(String),
}

impl HttpBackend {
    pub fn new(
        backend_id: impl Into<String>,
        settings: HttpSettings,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
        retry: RetryPolicy,
    ) -> Self {
        HttpBackend {
            backend_id: backend_id.into(),
            limiter: RateLimiter::new(settings.rate_limit_rps, clock.clone()),
            settings,
            transport,
            clock,
            retry,
        }
    }

    fn url(&self) -> String {
        self.settings.endpoint.replace("{key}", &self.settings.api_key)
    }

    fn headers(&self) -> Vec<(String, String)> {
        if self.settings.auth_header.is_empty() || self.settings.endpoint.contains("{key}") {
            return Vec::new();
        }
        vec![(
            self.settings.auth_header.clone(),
            format!("{}{}", self.settings.auth_prefix, self.settings.api_key),
        )]
    }

    fn source_code(&self, batch: &[&GeneratedSentence]) -> String {
        let code = batch[0].language.code();
        self.settings
            .source_codes
            .get(code)
            .cloned()
            .unwrap_or_else(|| code.to_string())
    }

    pub fn request_body(&self, batch: &[&GeneratedSentence]) -> Value {
        let texts: Vec<&str> = batch.iter().map(|s| s.text.as_str()).collect();
        let source = self.source_code(batch);
        fill(
            &self.settings.request_template,
            &texts,
            self.settings.item_template.as_ref(),
            &source,
        )
    }

    fn attempt(&self, batch: &[&GeneratedSentence], body: &str) -> Attempt {
        self.limiter.acquire();
        let resp = match self.transport.post(&self.url(), &self.headers(), body) {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(format!("network error: {e}")),
        };
        let fail_all = |msg: String| {
            Attempt::Done(
                batch
                    .iter()
                    .map(|s| Err(RecordFailure::new(&s.sentence_id, msg.clone())))
                    .collect(),
            )
        };
        match resp.status {
            200..=299 => match extract_translations(&resp.body, &self.settings.response_path) {
                Ok(texts) if texts.len() == batch.len() => Attempt::Done(
                    texts
                        .into_iter()
                        .zip(batch)
                        .map(|(t, s)| {
                            if t.trim().is_empty() {
                                Err(RecordFailure::new(&s.sentence_id, "empty translation"))
                            } else {
                                Ok(t)
                            }
                        })
                        .collect(),
                ),
                Ok(texts) => fail_all(format!(
                    "response had {} translations for {} inputs",
                    texts.len(),
                    batch.len()
                )),
                Err(e) => fail_all(format!("unreadable response: {e}")),
            },
            401 | 403 => fail_all(format!("authentication failed (HTTP {})", resp.status)),
            429 => Attempt::Quota(format!("rate limited or quota exceeded (HTTP 429): {}", snippet(&resp.body))),
            500..=599 => Attempt::Transient(format!("HTTP {}: {}", resp.status, snippet(&resp.body))),
            other => fail_all(format!("HTTP {other}: {}", snippet(&resp.body))),
        }
    }
}

fn snippet(body: &str) -> String {
    body.chars().take(200).collect()
}

impl Backend for HttpBackend {
    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn batch_size(&self) -> usize {
        self.settings.batch_size
    }

    fn parallelism(&self) -> usize {
        self.settings.parallelism
    }

    fn translate(
        &self,
        batch: &[&GeneratedSentence],
    ) -> Result<Vec<Result<String, RecordFailure>>, BackendError> {
        let body = self.request_body(batch).to_string();
        let mut attempt_no = 0;
        loop {
            let (kind, message) = match self.attempt(batch, &body) {
                Attempt::Done(results) => return Ok(results),
                Attempt::Transient(m) => ("transient", m),
                Attempt::Quota(m) => ("quota", m),
            };
            match self.retry.delay(attempt_no) {
                Some(delay) => {
                    debug!(
                        "{}: {kind} failure ({message}); retrying in {delay:?}",
                        self.backend_id
                    );
                    self.clock.sleep(delay);
                    attempt_no += 1;
                }
                None if kind == "quota" => {
                    return Err(BackendError::QuotaExceeded(message));
                }
                None => {
                    warn!("{}: giving up after {attempt_no} retries: {message}", self.backend_id);
                    let msg = format!("{message} (after {attempt_no} retries)");
                    return Ok(batch
                        .iter()
                        .map(|s| Err(RecordFailure::new(&s.sentence_id, msg.clone())))
                        .collect());
                }
            }
        }
    }
}

fn fill(template: &Value, texts: &[&str], item_template: Option<&Value>, source: &str) -> Value {
    match template {
        Value::String(s) if s == "{texts}" => {
            Value::Array(texts.iter().map(|t| Value::String(t.to_string())).collect())
        }
        Value::String(s) if s == "{items}" => Value::Array(
            texts
                .iter()
                .map(|t| match item_template {
                    Some(item) => fill(item, &[t], None, source),
                    None => Value::String(t.to_string()),
                })
                .collect(),
        ),
        Value::String(s) if s == "{text}" => Value::String(texts.first().copied().unwrap_or("").to_string()),
        Value::String(s) => Value::String(s.replace("{source}", source).replace("{target}", "en")),
        Value::Array(items) => Value::Array(
            items
                .iter()
                .map(|v| fill(v, texts, item_template, source))
                .collect(),
        ),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), fill(v, texts, item_template, source)))
                .collect(),
        ),
        other => other.clone(),
    }
}

/// Does the template contain a placeholder that carries more than one text?
pub fn template_supports_batches(template: &Value) -> bool {
    match template {
        Value::String(s) => s == "{texts}" || s == "{items}",
        Value::Array(items) => items.iter().any(template_supports_batches),
        Value::Object(map) => map.values().any(template_supports_batches),
        _ => false,
    }
}

pub fn template_has_text_slot(template: &Value) -> bool {
    match template {
        Value::String(s) => s == "{texts}" || s == "{items}" || s == "{text}",
        Value::Array(items) => items.iter().any(template_has_text_slot),
        Value::Object(map) => map.values().any(template_has_text_slot),
        _ => false,
    }
}

/// Follows `path` through the response JSON and returns the strings it
/// reaches, in document order.
pub fn extract_translations(body: &str, path: &str) -> Result<Vec<String>, String> {
    let root: Value = serde_json::from_str(body).map_err(|e| format!("invalid JSON: {e}"))?;
    let mut current = vec![&root];
    for segment in path.split('.').filter(|s| !s.is_empty()) {
        let mut next = Vec::with_capacity(current.len());
        for value in current {
            match (segment, value) {
                ("*", Value::Array(items)) => next.extend(items.iter()),
                ("*", other) => return Err(format!("`*` applied to non-array {other}")),
                (seg, Value::Array(items)) => {
                    let idx: usize = seg
                        .parse()
                        .map_err(|_| format!("key `{seg}` applied to an array"))?;
                    next.push(
                        items
                            .get(idx)
                            .ok_or_else(|| format!("index {idx} out of bounds"))?,
                    );
                }
                (seg, Value::Object(map)) => {
                    next.push(map.get(seg).ok_or_else(|| format!("missing key `{seg}`"))?)
                }
                (seg, other) => return Err(format!("cannot descend into {other} with `{seg}`")),
            }
        }
        current = next;
    }
    current
        .into_iter()
        .flat_map(|v| match v {
            Value::Array(items) => items.iter().collect::<Vec<_>>(),
            other => vec![other],
        })
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| format!("expected a string, found {v}"))
        })
        .collect()
}
