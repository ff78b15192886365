//! Chat-completion access to language models.
//!
//! Every request is identified by a fingerprint over the model name, the
//! messages and the decoding parameters. In `record` mode live replies are
//! appended to a cassette; in `replay` mode the cassette is the only source
//! and nothing touches the network.

pub mod cassette;
pub mod describe;
pub mod http;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{Cassette, CassetteEntry};
pub use describe::{describe_classes, parse_descriptions, ClassDescriptions};
pub use http::HttpTransport;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("bad request (HTTP {code}): {body}")]
    BadRequest { code: u16, body: String },
    #[error("server error (HTTP {code}) after {attempts} attempts")]
    Server { code: u16, attempts: u32 },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no cassette entry for request {0}")]
    ReplayMiss(String),
    #[error("cassette: {0}")]
    Cassette(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl GatewayError {
    /// How this failure is recorded on a [`ChatExchange`].
    pub fn status(&self) -> ExchangeStatus {
        match self {
            GatewayError::Auth(_) => ExchangeStatus::HttpError(401),
            GatewayError::RateLimited { .. } => ExchangeStatus::HttpError(429),
            GatewayError::BadRequest { code, .. } | GatewayError::Server { code, .. } => {
                ExchangeStatus::HttpError(*code)
            }
            GatewayError::Timeout { .. } => ExchangeStatus::Timeout,
            _ => ExchangeStatus::TransportError,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub name: String,
    pub base_url: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    /// Sent ahead of the prompt when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_message: Option<String>,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_concurrency() -> usize {
    4
}
fn default_timeout() -> f64 {
    120.0
}
fn default_max_tokens() -> u32 {
    4096
}

impl ModelEndpoint {
    pub fn new(name: impl Into<String>, base_url: impl Into<String>) -> Self {
        ModelEndpoint {
            name: name.into(),
            base_url: base_url.into(),
            api_key_env: default_key_env(),
            max_concurrency: default_concurrency(),
            timeout_secs: default_timeout(),
            temperature: 0.0,
            max_output_tokens: default_max_tokens(),
            system_message: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::InvalidEndpoint(format!("{}: {m}", self.name)));
        if self.name.is_empty() {
            return bad("empty name");
        }
        match self.base_url.parse::<ureq::http::Uri>() {
            Ok(uri)
                if matches!(uri.scheme_str(), Some("http" | "https"))
                    && uri.authority().is_some() => {}
            _ => return bad(&format!("base_url {:?} is not an http(s) URL", self.base_url)),
        }
        if self.max_concurrency == 0 {
            return bad("max_concurrency must be >= 1");
        }
        if !(self.timeout_secs > 0.0) {
            return bad("timeout must be > 0");
        }
        if !(self.temperature >= 0.0) {
            return bad("temperature must be >= 0");
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be >= 1");
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    /// The prompt as sent: optional system message, then one user turn.
    pub fn messages_for(&self, prompt: &str) -> Vec<Message> {
        let mut msgs = Vec::with_capacity(2);
        if let Some(sys) = &self.system_message {
            msgs.push(Message::new(Role::System, sys));
        }
        msgs.push(Message::new(Role::User, prompt));
        msgs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Message {
            role,
            content: content.into(),
        }
    }
}

/// The fingerprinted part of a request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    pub fn new(endpoint: &ModelEndpoint, messages: Vec<Message>) -> Self {
        ChatRequest {
            model: endpoint.name.clone(),
            messages,
            temperature: endpoint.temperature,
            max_output_tokens: endpoint.max_output_tokens,
        }
    }

    /// Hex SHA-256 of the request's canonical JSON.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeStatus {
    Ok,
    TransportError,
    HttpError(u16),
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request_fingerprint: String,
    pub messages: Vec<Message>,
    pub response_text: String,
    pub status: ExchangeStatus,
    pub latency_ms: u64,
}

impl ChatExchange {
    pub fn is_ok(&self) -> bool {
        self.status == ExchangeStatus::Ok
    }

    /// Records a failed request.
    pub fn failed(request: &ChatRequest, err: &GatewayError, latency_ms: u64) -> Self {
        ChatExchange {
            request_fingerprint: request.fingerprint(),
            messages: request.messages.clone(),
            response_text: err.to_string(),
            status: err.status(),
            latency_ms,
        }
    }
}

/// Outcome of a single attempt, before retry policy is applied.
#[derive(Debug, Clone, PartialEq)]
pub enum AttemptError {
    Http { code: u16, body: String },
    Timeout,
    Transport(String),
    Malformed(String),
    Auth(String),
}

/// Something that can perform one chat-completion attempt.
pub trait Transport: Send + Sync {
    fn send(&self, endpoint: &ModelEndpoint, request: &ChatRequest) -> Result<String, AttemptError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    Live,
    Record,
    Replay,
}

impl FromStr for TransportMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(TransportMode::Live),
            "record" => Ok(TransportMode::Record),
            "replay" => Ok(TransportMode::Replay),
            other => Err(format!("unknown transport {other:?} (live|record|replay)")),
        }
    }
}

impl fmt::Display for TransportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransportMode::Live => "live",
            TransportMode::Record => "record",
            TransportMode::Replay => "replay",
        })
    }
}

/// Exponential backoff: `base * factor^k` before attempt `k + 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: f64,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            base: Duration::from_secs(1),
            factor: 2.0,
            max_attempts: 5,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base.mul_f64(self.factor.powi(retry as i32))
    }
}

/// Counting semaphore that also remembers the highest occupancy seen.
#[derive(Debug)]
struct Limiter {
    cap: usize,
    state: Mutex<(usize, usize)>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(cap: usize) -> Self {
        Limiter {
            cap: cap.max(1),
            state: Mutex::new((0, 0)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock();
        while st.0 >= self.cap {
            self.freed.wait(&mut st);
        }
        st.0 += 1;
        st.1 = st.1.max(st.0);
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        self.0.state.lock().0 -= 1;
        self.0.freed.notify_one();
    }
}

/// A model endpoint plus the way requests reach it.
pub struct Gateway {
    endpoint: ModelEndpoint,
    mode: TransportMode,
    transport: Option<Arc<dyn Transport>>,
    cassette: Option<Arc<Cassette>>,
    retry: RetryPolicy,
    limiter: Limiter,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("endpoint", &self.endpoint.name)
            .field("mode", &self.mode)
            .finish()
    }
}

impl Gateway {
    pub fn new(
        endpoint: ModelEndpoint,
        mode: TransportMode,
        transport: Option<Arc<dyn Transport>>,
        cassette: Option<Arc<Cassette>>,
    ) -> Result<Self, GatewayError> {
        endpoint.validate()?;
        match mode {
            TransportMode::Live | TransportMode::Record if transport.is_none() => {
                return Err(GatewayError::Precondition(format!("{mode} mode needs a transport")))
            }
            TransportMode::Record | TransportMode::Replay if cassette.is_none() => {
                return Err(GatewayError::Precondition(format!("{mode} mode needs a cassette")))
            }
            _ => {}
        }
        let limiter = Limiter::new(endpoint.max_concurrency);
        Ok(Gateway {
            endpoint,
            mode,
            transport,
            cassette,
            retry: RetryPolicy::default(),
            limiter,
        })
    }

    /// Live HTTP transport for `endpoint`, optionally backed by a cassette.
    pub fn http(
        endpoint: ModelEndpoint,
        mode: TransportMode,
        cassette: Option<Arc<Cassette>>,
    ) -> Result<Self, GatewayError> {
        let transport: Option<Arc<dyn Transport>> = match mode {
            TransportMode::Replay => None,
            _ => Some(Arc::new(HttpTransport::new(&endpoint))),
        };
        Gateway::new(endpoint, mode, transport, cassette)
    }

    pub fn replay(endpoint: ModelEndpoint, cassette: Arc<Cassette>) -> Result<Self, GatewayError> {
        Gateway::new(endpoint, TransportMode::Replay, None, Some(cassette))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    pub fn mode(&self) -> TransportMode {
        self.mode
    }

    /// Highest number of simultaneous in-flight requests observed so far.
    pub fn peak_in_flight(&self) -> usize {
        self.limiter.state.lock().1
    }

    pub fn complete_prompt(&self, prompt: &str) -> Result<ChatExchange, GatewayError> {
        self.complete(self.endpoint.messages_for(prompt))
    }

    pub fn complete(&self, messages: Vec<Message>) -> Result<ChatExchange, GatewayError> {
        let request = ChatRequest::new(&self.endpoint, messages);
        let fingerprint = request.fingerprint();
        if self.mode == TransportMode::Replay {
            let cassette = self.cassette.as_ref().expect("checked in constructor");
            let entry = cassette
                .lookup(&fingerprint, &request)
                .ok_or_else(|| GatewayError::ReplayMiss(fingerprint.clone()))?;
            return Ok(ChatExchange {
                request_fingerprint: fingerprint,
                messages: request.messages,
                response_text: entry.response_text,
                status: entry.status,
                latency_ms: 0,
            });
        }
        let started = Instant::now();
        let result = {
            let _permit = self.limiter.acquire();
            self.send_with_retry(&request)
        };
        let latency_ms = started.elapsed().as_millis() as u64;
        let exchange = match &result {
            Ok(text) => ChatExchange {
                request_fingerprint: fingerprint.clone(),
                messages: request.messages.clone(),
                response_text: text.clone(),
                status: ExchangeStatus::Ok,
                latency_ms,
            },
            Err(e) => ChatExchange::failed(&request, e, latency_ms),
        };
        if self.mode == TransportMode::Record {
            self.cassette
                .as_ref()
                .expect("checked in constructor")
                .append(CassetteEntry {
                    fingerprint,
                    request,
                    response_text: exchange.response_text.clone(),
                    status: exchange.status,
                })?;
        }
        result.map(|_| exchange)
    }

    fn send_with_retry(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let transport = self.transport.as_ref().expect("checked in constructor");
        let max = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let err = match transport.send(&self.endpoint, request) {
                Ok(text) if text.is_empty() => {
                    return Err(GatewayError::Malformed("empty completion".into()))
                }
                Ok(text) => return Ok(text),
                Err(e) => e,
            };
            let transient = matches!(
                &err,
                AttemptError::Timeout | AttemptError::Http { code: 429 | 500..=599, .. }
            );
            if !transient || attempt >= max {
                return Err(match err {
                    AttemptError::Http { code: 401 | 403, body } => GatewayError::Auth(body),
                    AttemptError::Http { code: 429, .. } => GatewayError::RateLimited { attempts: attempt },
                    AttemptError::Http { code, .. } if code >= 500 => {
                        GatewayError::Server { code, attempts: attempt }
                    }
                    AttemptError::Http { code, body } => GatewayError::BadRequest { code, body },
                    AttemptError::Timeout => GatewayError::Timeout { attempts: attempt },
                    AttemptError::Transport(m) => GatewayError::Transport(m),
                    AttemptError::Malformed(m) => GatewayError::Malformed(m),
                    AttemptError::Auth(m) => GatewayError::Auth(m),
                });
            }
            let delay = self.retry.delay(attempt - 1);
            log::debug!("{}: attempt {attempt} failed ({err:?}), retrying in {delay:?}", self.endpoint.name);
            std::thread::sleep(delay);
        }
    }
}
