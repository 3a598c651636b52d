//! Uniform access to vision and text model backends.
//!
//! Stages build a [`ChatRequest`] from a [`PromptTemplate`] and send it
//! through a [`Gateway`], which retries transport failures and appends one
//! [`GatewayRecord`] per call to its recorder, successful or not.

mod openai;
mod scripted;
mod template;

use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use openai::{HttpReply, HttpTransport, OpenAiBackend, UreqTransport, API_KEY_ENV};
pub use scripted::{FnBackend, ScriptedBackend};
pub use template::{PromptTemplate, TemplateError, TemplateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
}

/// Image payload attached to a message.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageRef {
    pub bytes: Arc<Vec<u8>>,
    pub media_type: String,
}

impl ImageRef {
    pub fn new(bytes: Vec<u8>, media_type: impl Into<String>) -> Self {
        Self {
            bytes: Arc::new(bytes),
            media_type: media_type.into(),
        }
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.bytes.as_slice()))
    }
}

impl std::fmt::Debug for ImageRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageRef")
            .field("media_type", &self.media_type)
            .field("len", &self.bytes.len())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Image(ImageRef),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl Message {
    pub fn user(parts: Vec<Part>) -> Self {
        Self {
            role: Role::User,
            parts,
        }
    }

    pub fn user_text(text: impl Into<String>) -> Self {
        Self::user(vec![Part::Text(text.into())])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Which stage template produced the request; audit metadata only, not
    /// part of the fingerprint.
    pub purpose: Option<TemplateId>,
}

impl ChatRequest {
    pub fn has_images(&self) -> bool {
        self.messages
            .iter()
            .flat_map(|m| &m.parts)
            .any(|p| matches!(p, Part::Image(_)))
    }

    /// Human-readable prompt text with images replaced by a digest marker.
    pub fn prompt_text(&self) -> String {
        let mut out = String::new();
        for (i, m) in self.messages.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
            };
            out.push_str(&format!("[{role}]\n"));
            for p in &m.parts {
                match p {
                    Part::Text(t) => out.push_str(t),
                    Part::Image(img) => out.push_str(&format!(
                        "[image {} sha256:{} {} bytes]\n",
                        img.media_type,
                        img.sha256(),
                        img.bytes.len()
                    )),
                }
            }
        }
        out
    }
}

/// Stable content hash over the model id and whitespace-normalized messages.
///
/// The digest is SHA-256 over compact, key-sorted JSON of
/// `{model_id, messages: [{role, parts: [{text} | {image, media_type}]}]}`,
/// where text has whitespace runs collapsed and images are their SHA-256.
/// Sampling parameters are excluded so scripted fixtures do not depend on
/// them.
pub fn fingerprint(request: &ChatRequest) -> String {
    let messages: Vec<serde_json::Value> = request
        .messages
        .iter()
        .map(|m| {
            let parts: Vec<serde_json::Value> = m
                .parts
                .iter()
                .map(|p| match p {
                    Part::Text(t) => serde_json::json!({
                        "text": t.split_whitespace().collect::<Vec<_>>().join(" ")
                    }),
                    Part::Image(img) => serde_json::json!({
                        "image": img.sha256(),
                        "media_type": img.media_type,
                    }),
                })
                .collect();
            serde_json::json!({ "role": m.role, "parts": parts })
        })
        .collect();
    let canonical = serde_json::json!({ "model_id": request.model_id, "messages": messages });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend refused the request (HTTP {status}): {body}")]
    BackendRefusal { status: u16, body: String },
    #[error("backend finished normally but returned no text")]
    EmptyCompletion,
    #[error("no scripted response for fingerprint {0}")]
    UnmappedPrompt(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unreadable backend response: {0}")]
    BadResponse(String),
}

/// A chat model endpoint. Implementations must be safe to call from
/// several threads at once.
pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

/// Backend plus the model settings one stage uses.
#[derive(Clone)]
pub struct ModelRoute {
    pub backend: Arc<dyn ChatBackend>,
    pub model_id: String,
    pub vision: bool,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl std::fmt::Debug for ModelRoute {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelRoute")
            .field("model_id", &self.model_id)
            .field("vision", &self.vision)
            .field("temperature", &self.temperature)
            .field("max_output_tokens", &self.max_output_tokens)
            .finish()
    }
}

impl ModelRoute {
    pub fn new(backend: Arc<dyn ChatBackend>, model_id: impl Into<String>) -> Self {
        Self {
            backend,
            model_id: model_id.into(),
            vision: false,
            temperature: 0.0,
            max_output_tokens: 2048,
        }
    }

    pub fn with_vision(mut self, vision: bool) -> Self {
        self.vision = vision;
        self
    }

    pub fn request(&self, purpose: TemplateId, messages: Vec<Message>) -> ChatRequest {
        ChatRequest {
            model_id: self.model_id.clone(),
            messages,
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            purpose: Some(purpose),
        }
    }
}

/// Delays between transport retries; the number of delays is the number of
/// retries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub delays: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            delays: vec![Duration::from_millis(500), Duration::from_secs(2)],
        }
    }
}

impl RetryPolicy {
    pub fn immediate(retries: usize) -> Self {
        Self {
            delays: vec![Duration::ZERO; retries],
        }
    }
}

/// One audited model call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayRecord {
    pub seq: usize,
    pub template: Option<TemplateId>,
    pub model_id: String,
    pub fingerprint: String,
    pub prompt: String,
    pub response: Option<String>,
    pub finish_reason: Option<FinishReason>,
    pub error: Option<String>,
    pub attempts: u32,
    pub latency_ms: u64,
}

/// Per-instance gateway: routes requests and keeps the call log.
#[derive(Debug, Default)]
pub struct Gateway {
    retry: RetryPolicy,
    records: Mutex<Vec<GatewayRecord>>,
}

impl Gateway {
    pub fn new(retry: RetryPolicy) -> Self {
        Self {
            retry,
            records: Mutex::new(Vec::new()),
        }
    }

    pub fn complete(
        &self,
        route: &ModelRoute,
        request: &ChatRequest,
    ) -> Result<ChatResponse, GatewayError> {
        let started = Instant::now();
        let mut attempts = 0u32;
        let result = self.validate(route, request).and_then(|()| loop {
            attempts += 1;
            match route.backend.send(request) {
                Err(GatewayError::Transport(msg)) => {
                    match self.retry.delays.get(attempts as usize - 1) {
                        Some(delay) => {
                            tracing::warn!(attempt = attempts, %msg, "transport failure, retrying");
                            thread::sleep(*delay);
                        }
                        None => break Err(GatewayError::Transport(msg)),
                    }
                }
                Ok(resp) if resp.finish_reason == FinishReason::Stop && resp.text.trim().is_empty() => {
                    break Err(GatewayError::EmptyCompletion)
                }
                other => break other,
            }
        });
        let latency = started.elapsed();
        let mut records = self.records.lock().expect("recorder poisoned");
        let seq = records.len();
        records.push(GatewayRecord {
            seq,
            template: request.purpose,
            model_id: request.model_id.clone(),
            fingerprint: fingerprint(request),
            prompt: request.prompt_text(),
            response: result.as_ref().ok().map(|r| r.text.clone()),
            finish_reason: result.as_ref().ok().map(|r| r.finish_reason),
            error: result.as_ref().err().map(|e| e.to_string()),
            attempts,
            latency_ms: latency.as_millis() as u64,
        });
        result
    }

    fn validate(&self, route: &ModelRoute, request: &ChatRequest) -> Result<(), GatewayError> {
        if request.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("request has no messages".into()));
        }
        if request.has_images() && !route.vision {
            return Err(GatewayError::InvalidRequest(format!(
                "model {} is not vision-capable but the request carries an image",
                route.model_id
            )));
        }
        if !(0.0..=1.0).contains(&request.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 1]",
                request.temperature
            )));
        }
        Ok(())
    }

    pub fn records(&self) -> Vec<GatewayRecord> {
        self.records.lock().expect("recorder poisoned").clone()
    }

    pub fn call_count(&self) -> usize {
        self.records.lock().expect("recorder poisoned").len()
    }

    pub fn calls_for(&self, template: TemplateId) -> usize {
        self.records
            .lock()
            .expect("recorder poisoned")
            .iter()
            .filter(|r| r.template == Some(template))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;

    fn req(text: &str) -> ChatRequest {
        ChatRequest {
            model_id: "m".into(),
            messages: vec![Message::user_text(text)],
            temperature: 0.0,
            max_output_tokens: 16,
            purpose: None,
        }
    }

    #[test]
    fn fingerprint_ignores_sampling_and_whitespace() {
        let a = req("What was  the net sales?\n");
        let mut b = req("What was the net sales?");
        b.temperature = 0.7;
        b.max_output_tokens = 99;
        assert_eq!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint(&a), fingerprint(&a.clone()));
        assert_ne!(fingerprint(&a), fingerprint(&req("What was the net income?")));
        let mut c = a.clone();
        c.model_id = "other".into();
        assert_ne!(fingerprint(&a), fingerprint(&c));
    }

    #[test]
    fn fingerprint_is_stable_across_runs() {
        // sha256 of {"messages":[{"parts":[{"text":"hello"}],"role":"user"}],"model_id":"m"}
        assert_eq!(
            fingerprint(&req("hello")),
            "1665bc1fd248d0cd6030c2b7ef08da414525c532dd57ba266081fd76599094da"
        );
    }

    struct Flaky {
        calls: AtomicUsize,
        fail_first: usize,
    }

    impl ChatBackend for Flaky {
        fn send(&self, _: &ChatRequest) -> Result<ChatResponse, GatewayError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                return Err(GatewayError::Transport("connection reset".into()));
            }
            Ok(ChatResponse {
                text: "ok".into(),
                finish_reason: FinishReason::Stop,
                usage: Usage::default(),
                latency: Duration::ZERO,
            })
        }
    }

    #[test]
    fn transport_failures_are_retried_then_recorded_once() {
        let backend = Arc::new(Flaky {
            calls: AtomicUsize::new(0),
            fail_first: 2,
        });
        let route = ModelRoute::new(backend.clone(), "m");
        let gw = Gateway::new(RetryPolicy::immediate(2));
        assert_eq!(gw.complete(&route, &req("x")).unwrap().text, "ok");
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
        let records = gw.records();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].attempts, 3);
    }

    #[test]
    fn failures_are_recorded() {
        let backend = Arc::new(Flaky {
            calls: AtomicUsize::new(0),
            fail_first: 10,
        });
        let route = ModelRoute::new(backend.clone(), "m");
        let gw = Gateway::new(RetryPolicy::immediate(2));
        assert!(matches!(
            gw.complete(&route, &req("x")),
            Err(GatewayError::Transport(_))
        ));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
        let records = gw.records();
        assert_eq!(records.len(), 1);
        assert!(records[0].error.is_some());
        assert!(records[0].response.is_none());
    }

    #[test]
    fn images_require_a_vision_route() {
        let backend = Arc::new(Flaky {
            calls: AtomicUsize::new(0),
            fail_first: 0,
        });
        let route = ModelRoute::new(backend.clone(), "text-only");
        let mut r = req("x");
        r.messages[0]
            .parts
            .push(Part::Image(ImageRef::new(vec![1, 2, 3], "image/png")));
        let gw = Gateway::default();
        assert!(matches!(
            gw.complete(&route, &r),
            Err(GatewayError::InvalidRequest(_))
        ));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 0);
        assert_eq!(gw.call_count(), 1);
        assert!(gw.complete(&route.with_vision(true), &r).is_ok());
    }

    #[test]
    fn empty_stop_completion_is_an_error() {
        let gw = Gateway::default();
        let route = ModelRoute::new(Arc::new(FnBackend::new(|_| Ok(" ".into()))), "m");
        assert_eq!(
            gw.complete(&route, &req("x")),
            Err(GatewayError::EmptyCompletion)
        );
    }
}
