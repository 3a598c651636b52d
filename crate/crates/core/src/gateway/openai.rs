//! OpenAI-compatible `/chat/completions` backend.

use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, ChatResponse, FinishReason, GatewayError, Part, Role, Usage};

/// Environment variable read for the bearer credential when none is given.
pub const API_KEY_ENV: &str = "TABQA_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Minimal blocking HTTP surface so tests can count or fake round trips.
/// `Err` means the request never produced an HTTP status.
pub trait HttpTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpReply, String>;
}

#[derive(Debug, Default)]
pub struct UreqTransport;

impl HttpTransport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpReply, String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(url).header("Content-Type", "application/json");
        if let Some(token) = bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send(body.to_string()).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

pub struct OpenAiBackend {
    base_url: String,
    api_key: Option<String>,
    timeout: Duration,
    transport: Arc<dyn HttpTransport>,
}

impl std::fmt::Debug for OpenAiBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiBackend")
            .field("base_url", &self.base_url)
            .field("has_key", &self.api_key.is_some())
            .finish()
    }
}

impl OpenAiBackend {
    pub fn new(base_url: &str, api_key: Option<String>) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            timeout: Duration::from_secs(300),
            transport: Arc::new(UreqTransport),
        }
    }

    /// Backend whose credential comes from the named environment variable.
    pub fn from_env(base_url: &str, key_var: &str) -> Self {
        Self::new(base_url, std::env::var(key_var).ok().filter(|k| !k.is_empty()))
    }

    pub fn with_transport(mut self, transport: Arc<dyn HttpTransport>) -> Self {
        self.transport = transport;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }
}

/// Request body in the chat-completions wire shape.
pub(crate) fn encode_request(request: &ChatRequest) -> Value {
    let messages: Vec<Value> = request
        .messages
        .iter()
        .map(|m| {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
            };
            let content = match m.parts.as_slice() {
                [Part::Text(t)] => Value::String(t.clone()),
                parts => Value::Array(
                    parts
                        .iter()
                        .map(|p| match p {
                            Part::Text(t) => json!({ "type": "text", "text": t }),
                            Part::Image(img) => {
                                let data = base64::engine::general_purpose::STANDARD
                                    .encode(img.bytes.as_slice());
                                json!({
                                    "type": "image_url",
                                    "image_url": { "url": format!("data:{};base64,{data}", img.media_type) }
                                })
                            }
                        })
                        .collect(),
                ),
            };
            json!({ "role": role, "content": content })
        })
        .collect();
    json!({
        "model": request.model_id,
        "messages": messages,
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
        "stream": false,
    })
}

#[derive(Deserialize)]
struct WireResponse {
    #[serde(default)]
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

pub(crate) fn decode_response(body: &str, latency: Duration) -> Result<ChatResponse, GatewayError> {
    let wire: WireResponse =
        serde_json::from_str(body).map_err(|e| GatewayError::BadResponse(e.to_string()))?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::BadResponse("response has no choices".into()))?;
    let finish_reason = match choice.finish_reason.as_deref() {
        None | Some("stop") => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    let usage = wire
        .usage
        .map(|u| Usage {
            input_tokens: u.prompt_tokens,
            output_tokens: u.completion_tokens,
        })
        .unwrap_or_default();
    Ok(ChatResponse {
        text: choice.message.content.unwrap_or_default(),
        finish_reason,
        usage,
        latency,
    })
}

impl ChatBackend for OpenAiBackend {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let body = encode_request(request);
        let started = Instant::now();
        let reply = self
            .transport
            .post_json(&self.endpoint(), self.api_key.as_deref(), &body, self.timeout)
            .map_err(GatewayError::Transport)?;
        match reply.status {
            200..=299 => decode_response(&reply.body, started.elapsed()),
            // overload and timeouts are worth another try
            408 | 429 | 500..=599 => Err(GatewayError::Transport(format!(
                "HTTP {}: {}",
                reply.status, reply.body
            ))),
            status => Err(GatewayError::BackendRefusal {
                status,
                body: reply.body,
            }),
        }
    }
}
