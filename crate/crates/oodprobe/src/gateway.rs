//! Uniform access to classification backends.
//!
//! A backend is either a live chat-completion HTTP API (OpenAI- or
//! Anthropic-shaped) or a deterministic local stub. Every completion goes
//! through one chokepoint, [`Gateway::complete`], which provides:
//!
//! - an append-only on-disk cache keyed by a canonical SHA-256 request
//!   digest, so finished experiments replay exactly without keys or network;
//! - up to three retries with exponential backoff on transient failures
//!   (HTTP 429 / 5xx);
//! - refusal detection (one retry, then a distinct error so the caller can
//!   score the affected items as incorrect rather than dropping them);
//! - a per-backend token-bucket rate limiter and in-flight deduplication so
//!   concurrent callers trigger at most one network call per digest.
//!
//! No other module performs network I/O.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fixture;

pub mod stubs;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("auth env var {var} is not set for backend {backend}")]
    AuthMissing { backend: String, var: String },
    #[error("backend {backend} still rate-limited after {retries} retries")]
    RateLimited { backend: String, retries: u32 },
    #[error("backend {backend} refused the request: {snippet}")]
    BackendRefusal { backend: String, snippet: String },
    #[error("network error for backend {backend}: {detail}")]
    NetworkError { backend: String, detail: String },
    #[error("unknown backend {0}")]
    UnknownBackend(String),
    #[error("protocol error for backend {backend}: {detail}")]
    Protocol { backend: String, detail: String },
    #[error("offline mode forbids network call to backend {0}")]
    Offline(String),
    #[error("cache io error: {0}")]
    CacheIo(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LabelParseError {
    #[error("no label found for test item {0}")]
    MissingIndex(usize),
    #[error("ambiguous label for test item {0}")]
    AmbiguousLabel(usize),
    #[error("contradictory duplicate labels for test item {0}")]
    ContradictoryDuplicate(usize),
}

/// Binary class assignment in a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Class1,
    Class2,
}

impl ClassLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::Class1 => "Class 1",
            ClassLabel::Class2 => "Class 2",
        }
    }

    pub fn other(&self) -> ClassLabel {
        match self {
            ClassLabel::Class1 => ClassLabel::Class2,
            ClassLabel::Class2 => ClassLabel::Class1,
        }
    }
}

/// Resolved labels for the `n` test items of one trial, in item order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    pub labels: Vec<ClassLabel>,
    pub n: usize,
}

/// Decoding settings; temperature 0 everywhere so paired comparisons see
/// deterministic behavior from deterministic backends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for Decoding {
    fn default() -> Decoding {
        Decoding {
            temperature: 0.0,
            max_output_tokens: 1024,
        }
    }
}

/// Wire protocol spoken by a backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Built-in deterministic stub; no network.
    Local,
    /// OpenAI-style `/chat/completions`.
    OpenAiChat,
    /// Anthropic-style `/v1/messages`.
    AnthropicMessages,
}

/// Everything needed to reach one backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub backend_id: String,
    /// URL for live backends, `"local"` for stubs.
    pub endpoint: String,
    pub auth_env_var: Option<String>,
    pub protocol: Protocol,
    /// Model name sent on the wire; defaults to the id after `live:`.
    pub model: Option<String>,
    pub decoding: Decoding,
}

impl BackendSpec {
    pub fn stub(backend_id: &str) -> BackendSpec {
        BackendSpec {
            backend_id: backend_id.to_string(),
            endpoint: "local".to_string(),
            auth_env_var: None,
            protocol: Protocol::Local,
            model: None,
            decoding: Decoding::default(),
        }
    }

    pub fn is_stub(&self) -> bool {
        self.protocol == Protocol::Local
    }

    fn wire_model(&self) -> String {
        self.model.clone().unwrap_or_else(|| {
            self.backend_id
                .strip_prefix("live:")
                .unwrap_or(&self.backend_id)
                .to_string()
        })
    }
}

/// One completion, cached or fresh.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Completion {
    pub raw_text: String,
    pub backend_id: String,
    pub latency_ms: u64,
    pub from_cache: bool,
    pub request_digest: String,
    pub retries: u32,
}

/// Canonical request digest: SHA-256 over length-prefixed UTF-8 fields in
/// fixed order (backend id, prompt, temperature bits as 16 hex chars,
/// max token count as decimal). Stable across platforms and runs.
pub fn cache_key(backend_id: &str, prompt: &str, decoding: &Decoding) -> String {
    let mut hasher = Sha256::new();
    let mut field = |data: &str| {
        hasher.update((data.len() as u64).to_be_bytes());
        hasher.update(data.as_bytes());
    };
    field(backend_id);
    field(prompt);
    field(&format!("{:016x}", decoding.temperature.to_bits()));
    field(&decoding.max_output_tokens.to_string());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Outcome of a single backend attempt, before retry handling.
#[derive(Debug)]
pub enum AttemptError {
    /// Retryable: HTTP 429 or 5xx, connection failures.
    Transient { status: u16, detail: String },
    Fatal(GatewayError),
}

/// A completion source. Stubs implement this directly; live backends go
/// through a [`Transport`].
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete_once(&self, prompt: &str, decoding: &Decoding) -> Result<String, AttemptError>;
}

/// Blocking HTTP POST of a JSON body; swapped out in tests.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &serde_json::Value,
    ) -> Result<(u16, String), String>;
}

struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    fn new() -> ReqwestTransport {
        ReqwestTransport {
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("reqwest client"),
        }
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &serde_json::Value,
    ) -> Result<(u16, String), String> {
        let mut req = self.client.post(url).json(body);
        for (name, value) in headers {
            req = req.header(name, value);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| e.to_string())?;
        Ok((status, text))
    }
}

/// Phrases that mark a content-policy refusal; matched case-insensitively
/// near the start of the completion.
const REFUSAL_MARKERS: [&str; 10] = [
    "i can't assist",
    "i cannot assist",
    "i can't help with",
    "i cannot help with",
    "i'm sorry, but i can't",
    "i am sorry, but i cannot",
    "i won't be able to",
    "i will not be able to",
    "i must decline",
    "against my guidelines",
];

pub fn looks_like_refusal(text: &str) -> bool {
    let head: String = text.chars().take(300).collect::<String>().to_lowercase();
    REFUSAL_MARKERS.iter().any(|m| head.contains(m))
}

#[derive(Debug)]
struct TokenBucket {
    tokens: f64,
    last: Instant,
}

/// Cache entry layout on disk: `cache/<first-2-hex>/<digest>.json`.
#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    digest: String,
    backend_id: String,
    decoding: Decoding,
    prompt: String,
    raw_text: String,
    timestamp: u64,
    retries: u32,
}

/// Shared access point for all backends.
pub struct Gateway {
    cache_dir: PathBuf,
    offline: bool,
    backoff_ms: u64,
    max_retries: u32,
    rate_per_sec: f64,
    stubs: Mutex<HashMap<String, Arc<dyn Backend>>>,
    transport: Arc<dyn Transport>,
    inflight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    buckets: Mutex<HashMap<String, TokenBucket>>,
}

impl Gateway {
    pub fn new(cache_dir: &Path) -> Gateway {
        let gateway = Gateway {
            cache_dir: cache_dir.to_path_buf(),
            offline: false,
            backoff_ms: 500,
            max_retries: 3,
            rate_per_sec: 2.0,
            stubs: Mutex::new(HashMap::new()),
            transport: Arc::new(ReqwestTransport::new()),
            inflight: Mutex::new(HashMap::new()),
            buckets: Mutex::new(HashMap::new()),
        };
        gateway.register_stub(Arc::new(stubs::StyleOracle));
        gateway.register_stub(Arc::new(stubs::TopicBiasedOracle));
        gateway.register_stub(Arc::new(stubs::Reverser));
        gateway.register_stub(Arc::new(stubs::EchoParaphrase));
        gateway
    }

    /// Forbid all network calls; live backends error before any I/O.
    pub fn offline(mut self, offline: bool) -> Gateway {
        self.offline = offline;
        self
    }

    pub fn backoff_ms(mut self, ms: u64) -> Gateway {
        self.backoff_ms = ms;
        self
    }

    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Gateway {
        self.transport = transport;
        self
    }

    pub fn register_stub(&self, backend: Arc<dyn Backend>) {
        self.stubs
            .lock()
            .unwrap()
            .insert(backend.id().to_string(), backend);
    }

    pub fn cache_dir(&self) -> &Path {
        &self.cache_dir
    }

    fn cache_path(&self, digest: &str) -> PathBuf {
        self.cache_dir.join(&digest[..2]).join(format!("{digest}.json"))
    }

    fn cache_read(&self, digest: &str) -> Option<CacheEntry> {
        let bytes = fs::read(self.cache_path(digest)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    fn cache_write(&self, entry: &CacheEntry) -> Result<(), GatewayError> {
        let path = self.cache_path(&entry.digest);
        fs::create_dir_all(path.parent().unwrap())?;
        // Write-then-rename keeps readers away from partial entries.
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(entry).expect("serializable"))?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    fn throttle(&self, backend_id: &str) {
        if self.rate_per_sec <= 0.0 {
            return;
        }
        loop {
            let wait = {
                let mut buckets = self.buckets.lock().unwrap();
                let bucket = buckets.entry(backend_id.to_string()).or_insert(TokenBucket {
                    tokens: 1.0,
                    last: Instant::now(),
                });
                let now = Instant::now();
                bucket.tokens = (bucket.tokens
                    + now.duration_since(bucket.last).as_secs_f64() * self.rate_per_sec)
                    .min(self.rate_per_sec.max(1.0));
                bucket.last = now;
                if bucket.tokens >= 1.0 {
                    bucket.tokens -= 1.0;
                    None
                } else {
                    Some(Duration::from_secs_f64((1.0 - bucket.tokens) / self.rate_per_sec))
                }
            };
            match wait {
                None => return,
                Some(d) => std::thread::sleep(d),
            }
        }
    }

    fn resolve_stub(&self, backend_id: &str) -> Result<Arc<dyn Backend>, GatewayError> {
        self.stubs
            .lock()
            .unwrap()
            .get(backend_id)
            .cloned()
            .ok_or_else(|| GatewayError::UnknownBackend(backend_id.to_string()))
    }

    /// Completes a prompt, serving from cache when the digest is already
    /// stored. On a miss the backend is called with retries and the result
    /// is persisted before returning.
    pub fn complete(&self, spec: &BackendSpec, prompt: &str) -> Result<Completion, GatewayError> {
        let digest = cache_key(&spec.backend_id, prompt, &spec.decoding);

        // One in-flight call per digest; later callers hit the cache.
        let lock = {
            let mut inflight = self.inflight.lock().unwrap();
            inflight.entry(digest.clone()).or_default().clone()
        };
        let _guard = lock.lock().unwrap();

        if let Some(entry) = self.cache_read(&digest) {
            return Ok(Completion {
                raw_text: entry.raw_text,
                backend_id: spec.backend_id.clone(),
                latency_ms: 0,
                from_cache: true,
                request_digest: digest,
                retries: entry.retries,
            });
        }

        if !spec.is_stub() {
            if let Some(var) = &spec.auth_env_var {
                if std::env::var(var).map(|v| v.is_empty()).unwrap_or(true) {
                    return Err(GatewayError::AuthMissing {
                        backend: spec.backend_id.clone(),
                        var: var.clone(),
                    });
                }
            }
            if self.offline {
                return Err(GatewayError::Offline(spec.backend_id.clone()));
            }
        }

        let started = Instant::now();
        let (raw_text, retries) = self.call_with_retries(spec, prompt)?;
        let latency_ms = started.elapsed().as_millis() as u64;

        let entry = CacheEntry {
            digest: digest.clone(),
            backend_id: spec.backend_id.clone(),
            decoding: spec.decoding,
            prompt: prompt.to_string(),
            raw_text: raw_text.clone(),
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            retries,
        };
        self.cache_write(&entry)?;

        Ok(Completion {
            raw_text,
            backend_id: spec.backend_id.clone(),
            latency_ms,
            from_cache: false,
            request_digest: digest,
            retries,
        })
    }

    fn call_with_retries(
        &self,
        spec: &BackendSpec,
        prompt: &str,
    ) -> Result<(String, u32), GatewayError> {
        let mut retries = 0u32;
        let mut refusal_retried = false;
        loop {
            if !spec.is_stub() {
                self.throttle(&spec.backend_id);
            }
            let attempt = if spec.is_stub() {
                self.resolve_stub(&spec.backend_id)?
                    .complete_once(prompt, &spec.decoding)
            } else {
                self.live_attempt(spec, prompt)
            };
            match attempt {
                Ok(text) => {
                    if looks_like_refusal(&text) {
                        // One retry, then surface the refusal distinctly.
                        if !refusal_retried {
                            refusal_retried = true;
                            retries += 1;
                            continue;
                        }
                        let snippet: String = text.chars().take(120).collect();
                        return Err(GatewayError::BackendRefusal {
                            backend: spec.backend_id.clone(),
                            snippet,
                        });
                    }
                    return Ok((text, retries));
                }
                Err(AttemptError::Transient { status, detail }) => {
                    if retries >= self.max_retries {
                        return Err(if status == 429 {
                            GatewayError::RateLimited {
                                backend: spec.backend_id.clone(),
                                retries,
                            }
                        } else {
                            GatewayError::NetworkError {
                                backend: spec.backend_id.clone(),
                                detail,
                            }
                        });
                    }
                    let delay = self.backoff_ms.saturating_mul(1 << retries.min(8));
                    std::thread::sleep(Duration::from_millis(delay));
                    retries += 1;
                }
                Err(AttemptError::Fatal(err)) => return Err(err),
            }
        }
    }

    fn live_attempt(&self, spec: &BackendSpec, prompt: &str) -> Result<String, AttemptError> {
        let key = spec
            .auth_env_var
            .as_ref()
            .and_then(|var| std::env::var(var).ok())
            .unwrap_or_default();
        let (headers, body) = match spec.protocol {
            Protocol::OpenAiChat => (
                vec![("Authorization".to_string(), format!("Bearer {key}"))],
                serde_json::json!({
                    "model": spec.wire_model(),
                    "messages": [{"role": "user", "content": prompt}],
                    "temperature": spec.decoding.temperature,
                    "max_tokens": spec.decoding.max_output_tokens,
                }),
            ),
            Protocol::AnthropicMessages => (
                vec![
                    ("x-api-key".to_string(), key),
                    ("anthropic-version".to_string(), "2023-06-01".to_string()),
                ],
                serde_json::json!({
                    "model": spec.wire_model(),
                    "max_tokens": spec.decoding.max_output_tokens,
                    "temperature": spec.decoding.temperature,
                    "messages": [{"role": "user", "content": prompt}],
                }),
            ),
            Protocol::Local => unreachable!("stubs do not reach live_attempt"),
        };
        let (status, text) = self
            .transport
            .post_json(&spec.endpoint, &headers, &body)
            .map_err(|detail| AttemptError::Transient { status: 0, detail })?;
        if status == 429 || status >= 500 {
            return Err(AttemptError::Transient {
                status,
                detail: format!("http {status}"),
            });
        }
        if status != 200 {
            return Err(AttemptError::Fatal(GatewayError::NetworkError {
                backend: spec.backend_id.clone(),
                detail: format!("http {status}: {}", text.chars().take(200).collect::<String>()),
            }));
        }
        parse_completion_body(spec, &text).map_err(AttemptError::Fatal)
    }
}

/// Pulls the completion text out of a vendor response body.
pub fn parse_completion_body(spec: &BackendSpec, body: &str) -> Result<String, GatewayError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| GatewayError::Protocol {
            backend: spec.backend_id.clone(),
            detail: format!("bad json: {e}"),
        })?;
    let text = match spec.protocol {
        Protocol::OpenAiChat => value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str()),
        Protocol::AnthropicMessages => value.pointer("/content/0/text").and_then(|v| v.as_str()),
        Protocol::Local => None,
    };
    text.map(|s| s.to_string()).ok_or_else(|| GatewayError::Protocol {
        backend: spec.backend_id.clone(),
        detail: "missing completion text field".to_string(),
    })
}

/// A label assignment (or same-line ambiguity) found in a raw completion.
enum LabelCandidate {
    Resolved(usize, ClassLabel, usize),
    AmbiguousLine(usize),
}

/// Scans a completion for `(index, label)` assignments.
///
/// Lines that open with an index may omit the word "class" (`7: 2`);
/// entries embedded mid-line in prose must spell it out, which keeps
/// enumerations like "3 criteria: 1. formal tone" from registering as
/// labels. An indexed line naming both classes is ambiguous.
fn scan_label_candidates(raw: &str) -> Vec<LabelCandidate> {
    let entry_re = Regex::new(r"^\s*(\d{1,3})\s*[:.)]\s*(.*)$").unwrap();
    let bare_re = Regex::new(r"(?i)^(?:class\s*)?([12])\s*\.?\s*$").unwrap();
    let class_re = Regex::new(r"(?i)\bclass\s*([12])\b").unwrap();
    let inline_re = Regex::new(r"(?i)(\d{1,3})\s*[:.)]\s*class\s*([12])\b").unwrap();
    let to_label = |digit: &str| {
        if digit == "1" { ClassLabel::Class1 } else { ClassLabel::Class2 }
    };

    let mut found = Vec::new();
    for (line_no, line) in raw.lines().enumerate() {
        if let Some(caps) = entry_re.captures(line) {
            let idx: usize = caps[1].parse().unwrap_or(0);
            let rest = &caps[2];
            if let Some(bare) = bare_re.captures(rest) {
                found.push(LabelCandidate::Resolved(idx, to_label(&bare[1]), line_no));
                continue;
            }
            // Further indexed entries squeezed onto the same line are their
            // own candidates, not part of this entry's label.
            for caps in inline_re.captures_iter(rest) {
                let sub_idx: usize = caps[1].parse().unwrap_or(0);
                found.push(LabelCandidate::Resolved(sub_idx, to_label(&caps[2]), line_no));
            }
            let stripped = inline_re.replace_all(rest, "");
            let mentioned: BTreeSet<ClassLabel> = class_re
                .captures_iter(&stripped)
                .map(|c| to_label(&c[1]))
                .collect();
            match mentioned.len() {
                1 => {
                    let label = *mentioned.iter().next().expect("non-empty");
                    found.push(LabelCandidate::Resolved(idx, label, line_no));
                }
                n if n > 1 => found.push(LabelCandidate::AmbiguousLine(idx)),
                _ => {} // indexed line without a label: chatter
            }
            continue;
        }
        for caps in inline_re.captures_iter(line) {
            let idx: usize = caps[1].parse().unwrap_or(0);
            found.push(LabelCandidate::Resolved(idx, to_label(&caps[2]), line_no));
        }
    }
    found
}

/// Parses a completion into exactly `n_expected` labels, indices 1..=n.
///
/// Accepts `k: Class 1`, `k. Class 2`, and `k: 1` forms, case-insensitive,
/// with surrounding chatter ignored. Repeating an index with the same label
/// is tolerated; with a different label it is an error.
pub fn parse_label_list(raw: &str, n_expected: usize) -> Result<LabelVector, LabelParseError> {
    let mut resolved: BTreeMap<usize, (ClassLabel, usize)> = BTreeMap::new();
    for candidate in scan_label_candidates(raw) {
        let (idx, label, line_no) = match candidate {
            LabelCandidate::Resolved(idx, label, line_no) => (idx, label, line_no),
            LabelCandidate::AmbiguousLine(idx) => {
                if idx >= 1 && idx <= n_expected {
                    return Err(LabelParseError::AmbiguousLabel(idx));
                }
                continue;
            }
        };
        if idx == 0 || idx > n_expected {
            continue; // chatter
        }
        match resolved.get(&idx) {
            None => {
                resolved.insert(idx, (label, line_no));
            }
            Some((existing, existing_line)) if *existing != label => {
                return Err(if *existing_line == line_no {
                    LabelParseError::AmbiguousLabel(idx)
                } else {
                    LabelParseError::ContradictoryDuplicate(idx)
                });
            }
            Some(_) => {}
        }
    }
    let mut labels = Vec::with_capacity(n_expected);
    for idx in 1..=n_expected {
        match resolved.get(&idx) {
            Some((label, _)) => labels.push(*label),
            None => return Err(LabelParseError::MissingIndex(idx)),
        }
    }
    Ok(LabelVector {
        labels,
        n: n_expected,
    })
}

/// Lenient variant for scoring: returns whatever indices resolved uniquely;
/// missing or conflicting ones are simply absent and get scored as
/// incorrect by the caller.
pub fn parse_label_list_partial(raw: &str, n_expected: usize) -> BTreeMap<usize, ClassLabel> {
    let mut resolved: BTreeMap<usize, ClassLabel> = BTreeMap::new();
    let mut poisoned: Vec<usize> = Vec::new();
    for candidate in scan_label_candidates(raw) {
        let (idx, label) = match candidate {
            LabelCandidate::Resolved(idx, label, _) => (idx, label),
            LabelCandidate::AmbiguousLine(idx) => {
                poisoned.push(idx);
                continue;
            }
        };
        if idx == 0 || idx > n_expected {
            continue;
        }
        match resolved.get(&idx) {
            None => {
                resolved.insert(idx, label);
            }
            Some(existing) if *existing != label => poisoned.push(idx),
            Some(_) => {}
        }
    }
    for idx in poisoned {
        resolved.remove(&idx);
    }
    resolved
}

/// Built-in stub specs by id; `None` for unknown ids.
pub fn builtin_stub_spec(backend_id: &str) -> Option<BackendSpec> {
    matches!(
        backend_id,
        stubs::STYLE_ORACLE_ID
            | stubs::TOPIC_BIASED_ORACLE_ID
            | stubs::REVERSER_ID
            | stubs::ECHO_PARAPHRASE_ID
    )
    .then(|| BackendSpec::stub(backend_id))
}

/// Default spec for a live backend id such as `live:gpt-4o` or
/// `live:claude-3-opus`; vendor inferred from the model name.
pub fn default_live_spec(backend_id: &str) -> Option<BackendSpec> {
    let model = backend_id.strip_prefix("live:")?;
    let (endpoint, auth, protocol) = if model.starts_with("claude") {
        (
            "https://api.anthropic.com/v1/messages",
            "OODPROBE_ANTHROPIC_KEY",
            Protocol::AnthropicMessages,
        )
    } else {
        (
            "https://api.openai.com/v1/chat/completions",
            "OODPROBE_OPENAI_KEY",
            Protocol::OpenAiChat,
        )
    };
    Some(BackendSpec {
        backend_id: backend_id.to_string(),
        endpoint: endpoint.to_string(),
        auth_env_var: Some(auth.to_string()),
        protocol,
        model: Some(model.to_string()),
        decoding: Decoding::default(),
    })
}

/// Content tokens used by the topical stub: lowercase alphabetic tokens
/// minus the fixture stopword list (which includes the genre markers).
pub fn content_tokens(text: &str) -> Vec<String> {
    let stop: std::collections::HashSet<String> = fixture::stopword_list().into_iter().collect();
    crate::topics::tokenize(text)
        .into_iter()
        .filter(|t| !stop.contains(t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn cache_key_matches_frozen_reference_vector() {
        // Computed once with an external SHA-256 tool over the canonical
        // serialization; guards the digest layout against drift.
        let d = cache_key("stub:style_oracle", "", &Decoding::default());
        assert_eq!(
            d,
            "07ad7de55687e5d22f414d700d0c490db86077e4a0135ab5c810115857fc3410"
        );
        let d1 = cache_key("stub:style_oracle", "x", &Decoding::default());
        assert_eq!(
            d1,
            "99de8b79806b90648566afc3a77d86ef975f0665e13c2de79e20f34999c6a45c"
        );
    }

    #[test]
    fn cache_key_is_sensitive_to_every_field() {
        let base = cache_key("b", "p", &Decoding::default());
        assert_ne!(base, cache_key("b", "q", &Decoding::default()));
        assert_ne!(base, cache_key("c", "p", &Decoding::default()));
        assert_ne!(
            base,
            cache_key(
                "b",
                "p",
                &Decoding {
                    temperature: 0.5,
                    ..Decoding::default()
                }
            )
        );
        assert_eq!(base, cache_key("b", "p", &Decoding::default()));
    }

    #[test]
    fn parse_accepts_the_three_stated_forms() {
        let v = parse_label_list("1: Class 1\n2: Class 2", 2).unwrap();
        assert_eq!(v.labels, vec![ClassLabel::Class1, ClassLabel::Class2]);

        let v = parse_label_list("1. Class 2\n2. Class 1", 2).unwrap();
        assert_eq!(v.labels, vec![ClassLabel::Class2, ClassLabel::Class1]);

        let v = parse_label_list("1: 1\n2: 2", 2).unwrap();
        assert_eq!(v.labels, vec![ClassLabel::Class1, ClassLabel::Class2]);
    }

    #[test]
    fn parse_tolerates_chatter() {
        let raw = "Sure! Here are my answers. 1. Class 2 and then 2. Class 2";
        let v = parse_label_list(raw, 2).unwrap();
        assert_eq!(v.labels, vec![ClassLabel::Class2, ClassLabel::Class2]);

        let raw = "I found 3 criteria: 1. formal tone\n1: Class 1\n2: Class 2";
        let v = parse_label_list(raw, 2).unwrap();
        assert_eq!(v.labels, vec![ClassLabel::Class1, ClassLabel::Class2]);
    }

    #[test]
    fn parse_reports_missing_and_contradictory_indices() {
        let raw: String = (1..=10)
            .filter(|k| *k != 7)
            .map(|k| format!("{k}: Class 1\n"))
            .collect();
        assert_eq!(
            parse_label_list(&raw, 10),
            Err(LabelParseError::MissingIndex(7))
        );

        let raw = "1: Class 1\n2: Class 2\n1: Class 2";
        assert_eq!(
            parse_label_list(raw, 2),
            Err(LabelParseError::ContradictoryDuplicate(1))
        );

        let raw = "1: Class 1 or Class 2\n2: Class 1";
        assert_eq!(
            parse_label_list(raw, 2),
            Err(LabelParseError::AmbiguousLabel(1))
        );
    }

    #[test]
    fn partial_parse_drops_conflicts_and_gaps() {
        let raw = "1: Class 1\n2: Class 2\n2: Class 1\n4: Class 2";
        let partial = parse_label_list_partial(raw, 4);
        assert_eq!(partial.get(&1), Some(&ClassLabel::Class1));
        assert_eq!(partial.get(&2), None);
        assert_eq!(partial.get(&3), None);
        assert_eq!(partial.get(&4), Some(&ClassLabel::Class2));
    }

    #[test]
    fn refusal_phrases_are_detected() {
        assert!(looks_like_refusal("I'm sorry, but I can't assist with that request."));
        assert!(!looks_like_refusal("1: Class 1\n2: Class 2"));
    }

    struct Scripted {
        responses: Mutex<Vec<Result<String, u16>>>,
        calls: AtomicU32,
    }

    impl Scripted {
        fn new(responses: Vec<Result<String, u16>>) -> Scripted {
            Scripted {
                responses: Mutex::new(responses),
                calls: AtomicU32::new(0),
            }
        }
    }

    impl Backend for Scripted {
        fn id(&self) -> &str {
            "stub:scripted"
        }
        fn complete_once(&self, _prompt: &str, _decoding: &Decoding) -> Result<String, AttemptError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let mut responses = self.responses.lock().unwrap();
            match responses.remove(0) {
                Ok(text) => Ok(text),
                Err(status) => Err(AttemptError::Transient {
                    status,
                    detail: format!("http {status}"),
                }),
            }
        }
    }

    fn test_gateway(dir: &Path) -> Gateway {
        Gateway::new(dir).backoff_ms(1)
    }

    #[test]
    fn transient_failures_are_retried_and_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let gateway = test_gateway(dir.path());
        gateway.register_stub(Arc::new(Scripted::new(vec![
            Err(429),
            Err(429),
            Ok("1: Class 1".to_string()),
        ])));
        let spec = BackendSpec::stub("stub:scripted");
        let completion = gateway.complete(&spec, "prompt").unwrap();
        assert_eq!(completion.raw_text, "1: Class 1");
        assert_eq!(completion.retries, 2);
        assert!(!completion.from_cache);
    }

    #[test]
    fn rate_limit_exhaustion_is_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let gateway = test_gateway(dir.path());
        gateway.register_stub(Arc::new(Scripted::new(vec![
            Err(429),
            Err(429),
            Err(429),
            Err(429),
        ])));
        let spec = BackendSpec::stub("stub:scripted");
        match gateway.complete(&spec, "prompt") {
            Err(GatewayError::RateLimited { retries: 3, .. }) => {}
            other => panic!("expected RateLimited, got {other:?}"),
        }
    }

    #[test]
    fn cache_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let gateway = test_gateway(dir.path());
        gateway.register_stub(Arc::new(Scripted::new(vec![Ok(
            "answer \u{2713} bytes".to_string()
        )])));
        let spec = BackendSpec::stub("stub:scripted");
        let first = gateway.complete(&spec, "p").unwrap();
        assert!(!first.from_cache);
        // Second call must not touch the backend (its script is empty).
        let second = gateway.complete(&spec, "p").unwrap();
        assert!(second.from_cache);
        assert_eq!(first.raw_text, second.raw_text);
        assert_eq!(first.request_digest, second.request_digest);
    }

    #[test]
    fn inflight_dedup_makes_one_call_per_digest() {
        let dir = tempfile::tempdir().unwrap();
        let gateway = Arc::new(test_gateway(dir.path()));
        let scripted = Arc::new(Scripted::new(vec![
            Ok("only once".to_string()),
            Ok("should not be consumed".to_string()),
            Ok("should not be consumed".to_string()),
            Ok("should not be consumed".to_string()),
        ]));
        gateway.register_stub(scripted.clone());
        let spec = BackendSpec::stub("stub:scripted");
        let mut handles = Vec::new();
        for _ in 0..4 {
            let gateway = gateway.clone();
            let spec = spec.clone();
            handles.push(std::thread::spawn(move || {
                gateway.complete(&spec, "same prompt").unwrap().raw_text
            }));
        }
        for handle in handles {
            assert_eq!(handle.join().unwrap(), "only once");
        }
        assert_eq!(scripted.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn refusal_gets_one_retry_then_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let gateway = test_gateway(dir.path());
        gateway.register_stub(Arc::new(Scripted::new(vec![
            Ok("I'm sorry, but I can't assist with that.".to_string()),
            Ok("I'm sorry, but I can't assist with that.".to_string()),
        ])));
        let spec = BackendSpec::stub("stub:scripted");
        match gateway.complete(&spec, "p") {
            Err(GatewayError::BackendRefusal { .. }) => {}
            other => panic!("expected BackendRefusal, got {other:?}"),
        }
    }

    #[test]
    fn refusal_retry_can_succeed() {
        let dir = tempfile::tempdir().unwrap();
        let gateway = test_gateway(dir.path());
        gateway.register_stub(Arc::new(Scripted::new(vec![
            Ok("I'm sorry, but I can't assist with that.".to_string()),
            Ok("1: Class 2".to_string()),
        ])));
        let spec = BackendSpec::stub("stub:scripted");
        let completion = gateway.complete(&spec, "p").unwrap();
        assert_eq!(completion.raw_text, "1: Class 2");
    }

    #[test]
    fn missing_auth_fails_before_any_network() {
        let dir = tempfile::tempdir().unwrap();
        let gateway = test_gateway(dir.path());
        let mut spec = default_live_spec("live:gpt-4o").unwrap();
        spec.auth_env_var = Some("OODPROBE_TEST_UNSET_KEY_VAR".to_string());
        match gateway.complete(&spec, "p") {
            Err(GatewayError::AuthMissing { var, .. }) => {
                assert_eq!(var, "OODPROBE_TEST_UNSET_KEY_VAR");
            }
            other => panic!("expected AuthMissing, got {other:?}"),
        }
    }

    #[test]
    fn offline_mode_blocks_live_backends() {
        let dir = tempfile::tempdir().unwrap();
        let gateway = test_gateway(dir.path()).offline(true);
        let mut spec = default_live_spec("live:gpt-4o").unwrap();
        std::env::set_var("OODPROBE_TEST_FAKE_KEY", "k");
        spec.auth_env_var = Some("OODPROBE_TEST_FAKE_KEY".to_string());
        assert!(matches!(
            gateway.complete(&spec, "p"),
            Err(GatewayError::Offline(_))
        ));
    }

    struct CannedTransport {
        status: u16,
        body: String,
    }

    impl Transport for CannedTransport {
        fn post_json(
            &self,
            _url: &str,
            _headers: &[(String, String)],
            _body: &serde_json::Value,
        ) -> Result<(u16, String), String> {
            Ok((self.status, self.body.clone()))
        }
    }

    #[test]
    fn vendor_response_field_mapping() {
        let openai = default_live_spec("live:gpt-4o").unwrap();
        let body = r#"{"choices": [{"message": {"role": "assistant", "content": "1: Class 1"}}]}"#;
        assert_eq!(parse_completion_body(&openai, body).unwrap(), "1: Class 1");

        let anthropic = default_live_spec("live:claude-3-opus").unwrap();
        assert_eq!(anthropic.protocol, Protocol::AnthropicMessages);
        let body = r#"{"content": [{"type": "text", "text": "2: Class 2"}]}"#;
        assert_eq!(parse_completion_body(&anthropic, body).unwrap(), "2: Class 2");

        assert!(parse_completion_body(&openai, "{}").is_err());
    }

    #[test]
    fn live_call_goes_through_transport() {
        let dir = tempfile::tempdir().unwrap();
        std::env::set_var("OODPROBE_TEST_FAKE_KEY2", "k");
        let gateway = test_gateway(dir.path()).with_transport(Arc::new(CannedTransport {
            status: 200,
            body: r#"{"choices": [{"message": {"content": "ok"}}]}"#.to_string(),
        }));
        let mut spec = default_live_spec("live:gpt-4o").unwrap();
        spec.auth_env_var = Some("OODPROBE_TEST_FAKE_KEY2".to_string());
        let completion = gateway.complete(&spec, "p").unwrap();
        assert_eq!(completion.raw_text, "ok");
    }
}
