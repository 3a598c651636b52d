use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use super::{fingerprint, ChatBackend, ChatRequest, ChatResponse, FinishReason, GatewayError, GatewayRecord, Usage};

fn stop(text: String) -> ChatResponse {
    ChatResponse {
        text,
        finish_reason: FinishReason::Stop,
        usage: Usage::default(),
        latency: Duration::ZERO,
    }
}

/// Deterministic stand-in for a model: canned responses keyed by request
/// fingerprint.
///
/// In strict mode an unknown fingerprint is an error; otherwise the
/// fallback text is returned.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    responses: BTreeMap<String, String>,
    fallback: Option<String>,
}

impl ScriptedBackend {
    pub fn strict(responses: BTreeMap<String, String>) -> Self {
        Self {
            responses,
            fallback: None,
        }
    }

    pub fn lenient(responses: BTreeMap<String, String>, fallback: impl Into<String>) -> Self {
        Self {
            responses,
            fallback: Some(fallback.into()),
        }
    }

    /// Loads a mapping file: a JSON object from fingerprint to response text.
    pub fn from_file(path: &Path, strict: bool) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let responses: BTreeMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(if strict {
            Self::strict(responses)
        } else {
            Self::lenient(responses, String::new())
        })
    }

    /// Mapping recovered from an audited call log; failed calls are skipped.
    pub fn from_records(records: &[GatewayRecord]) -> Self {
        Self::strict(
            records
                .iter()
                .filter_map(|r| Some((r.fingerprint.clone(), r.response.clone()?)))
                .collect(),
        )
    }

    pub fn responses(&self) -> &BTreeMap<String, String> {
        &self.responses
    }

    pub fn insert(&mut self, fingerprint: impl Into<String>, response: impl Into<String>) {
        self.responses.insert(fingerprint.into(), response.into());
    }
}

impl ChatBackend for ScriptedBackend {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let fp = fingerprint(request);
        match (self.responses.get(&fp), &self.fallback) {
            (Some(text), _) => Ok(stop(text.clone())),
            (None, Some(text)) => Ok(stop(text.clone())),
            (None, None) => Err(GatewayError::UnmappedPrompt(fp)),
        }
    }
}

type Responder = dyn Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync;

/// Backend answering through a closure; handy for building fixtures.
pub struct FnBackend {
    respond: Box<Responder>,
}

impl FnBackend {
    pub fn new<F>(respond: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync + 'static,
    {
        Self {
            respond: Box::new(respond),
        }
    }
}

impl ChatBackend for FnBackend {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (self.respond)(request).map(stop)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Message;

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
    fn scripted_echo() {
        let r = req("say hello");
        let backend = ScriptedBackend::strict([(fingerprint(&r), "hello".to_string())].into());
        assert_eq!(backend.send(&r).unwrap().text, "hello");
    }

    #[test]
    fn strict_mode_rejects_unknown_prompts() {
        let backend = ScriptedBackend::strict(BTreeMap::new());
        let r = req("unknown");
        assert_eq!(
            backend.send(&r),
            Err(GatewayError::UnmappedPrompt(fingerprint(&r)))
        );
    }

    #[test]
    fn lenient_mode_uses_fallback() {
        let backend = ScriptedBackend::lenient(BTreeMap::new(), "default");
        assert_eq!(backend.send(&req("x")).unwrap().text, "default");
    }

    #[test]
    fn mapping_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.json");
        let r = req("q");
        std::fs::write(&path, format!("{{\"{}\": \"a\"}}", fingerprint(&r))).unwrap();
        let backend = ScriptedBackend::from_file(&path, true).unwrap();
        assert_eq!(backend.send(&r).unwrap().text, "a");
    }
}
