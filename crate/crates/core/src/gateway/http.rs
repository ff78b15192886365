//! The chat-completions wire format over blocking HTTP.

use serde_json::{json, Value};

use super::{AttemptError, ChatRequest, ModelEndpoint, Transport};

/// Cap on a reply body; completions are a few KiB of code.
const MAX_BODY_BYTES: u64 = 16 << 20;

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: &ModelEndpoint) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(endpoint.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { agent }
    }
}

/// Request body: `model`, `messages` (role/content), `temperature`,
/// `max_tokens`.
pub fn request_body(request: &ChatRequest) -> Value {
    json!({
        "model": request.model,
        "messages": request.messages,
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
    })
}

/// Text of the first choice's message.
pub fn parse_completion(body: &str) -> Result<String, AttemptError> {
    let v: Value = serde_json::from_str(body).map_err(|e| AttemptError::Malformed(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| AttemptError::Malformed("missing choices[0].message.content".into()))
}

impl Transport for HttpTransport {
    fn send(&self, endpoint: &ModelEndpoint, request: &ChatRequest) -> Result<String, AttemptError> {
        let key = std::env::var(&endpoint.api_key_env).map_err(|_| {
            AttemptError::Auth(format!("environment variable {} is not set", endpoint.api_key_env))
        })?;
        let resp = self
            .agent
            .post(&endpoint.completions_url())
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(request_body(request));
        let mut resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(AttemptError::Timeout),
            Err(e) => return Err(AttemptError::Transport(e.to_string())),
        };
        let code = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY_BYTES)
            .read_to_string()
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => AttemptError::Timeout,
                other => AttemptError::Transport(other.to_string()),
            })?;
        if !(200..300).contains(&code) {
            return Err(AttemptError::Http { code, body });
        }
        parse_completion(&body)
    }
}
