use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::{DEFAULT_EXEC_TIMEOUT_MS, DEFAULT_MAX_TRIES};
use crate::executor::{ExecutorFactory, ScriptedExecutor, ScriptedOutcomes, SubprocessFactory};
use crate::fuzzy::DEFAULT_FUZZY_THRESHOLD;
use crate::gateway::{OpenAiBackend, API_KEY_ENV};
use crate::gateway::{ChatBackend, ModelRoute, RetryPolicy, ScriptedBackend};
use crate::metrics::DEFAULT_ANLS_THRESHOLD;
use crate::understanding::DEFAULT_EXTRACTION_MAX_TRIES;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Any chat-completions compatible HTTP endpoint.
    Openai,
    /// Canned responses keyed by prompt fingerprint.
    Scripted,
}

fn default_temperature() -> f64 {
    0.0
}
fn default_max_output_tokens() -> u32 {
    2048
}
fn default_api_key_env() -> String {
    API_KEY_ENV.to_string()
}
fn default_true() -> bool {
    true
}
fn default_request_timeout_ms() -> u64 {
    300_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_request_timeout_ms")]
    pub request_timeout_ms: u64,
    /// Fingerprint-to-response JSON file for scripted backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub strict: bool,
}

impl BackendConfig {
    pub fn scripted(model_id: &str, mapping: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::Scripted,
            model_id: model_id.into(),
            endpoint: None,
            temperature: default_temperature(),
            max_output_tokens: default_max_output_tokens(),
            api_key_env: default_api_key_env(),
            request_timeout_ms: default_request_timeout_ms(),
            mapping: Some(mapping.into()),
            strict: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageBackends {
    pub understanding: BackendConfig,
    pub reasoning: BackendConfig,
    pub codegen: BackendConfig,
    pub explanation: BackendConfig,
}

impl StageBackends {
    fn named(&self) -> [(&'static str, &BackendConfig); 4] {
        [
            ("understanding", &self.understanding),
            ("reasoning", &self.reasoning),
            ("codegen", &self.codegen),
            ("explanation", &self.explanation),
        ]
    }
}

fn default_max_tries() -> u32 {
    DEFAULT_MAX_TRIES
}
fn default_extraction_max_tries() -> u32 {
    DEFAULT_EXTRACTION_MAX_TRIES
}
fn default_fuzzy_threshold() -> f64 {
    DEFAULT_FUZZY_THRESHOLD
}
fn default_anls_threshold() -> f64 {
    DEFAULT_ANLS_THRESHOLD
}
fn default_exec_timeout_ms() -> u64 {
    DEFAULT_EXEC_TIMEOUT_MS
}
fn default_parallelism() -> usize {
    4
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_retry_delays_ms() -> Vec<u64> {
    vec![500, 2000]
}

/// Run configuration, read from JSON. Relative paths are resolved against
/// the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub backends: StageBackends,
    #[serde(default = "default_max_tries")]
    pub max_tries: u32,
    #[serde(default = "default_extraction_max_tries")]
    pub extraction_max_tries: u32,
    #[serde(default = "default_fuzzy_threshold")]
    pub fuzzy_threshold: f64,
    #[serde(default = "default_anls_threshold")]
    pub anls_threshold: f64,
    #[serde(default = "default_exec_timeout_ms")]
    pub exec_timeout_ms: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Command line starting an executor session (split shell-style).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executor_command: Option<String>,
    /// Canned executor outcomes; used when no command is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scripted_executor: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_retry_delays_ms")]
    pub transport_retry_delays_ms: Vec<u64>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    /// Config with every tunable at its default.
    pub fn new(backends: StageBackends) -> Self {
        Self {
            backends,
            max_tries: default_max_tries(),
            extraction_max_tries: default_extraction_max_tries(),
            fuzzy_threshold: default_fuzzy_threshold(),
            anls_threshold: default_anls_threshold(),
            exec_timeout_ms: default_exec_timeout_ms(),
            parallelism: default_parallelism(),
            executor_command: None,
            scripted_executor: None,
            output_dir: default_output_dir(),
            transport_retry_delays_ms: default_retry_delays_ms(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut config: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.parallelism < 1 {
            return invalid("parallelism must be at least 1".into());
        }
        if self.max_tries < 1 {
            return invalid("max_tries must be at least 1".into());
        }
        if self.extraction_max_tries < 1 {
            return invalid("extraction_max_tries must be at least 1".into());
        }
        for (name, t) in [("fuzzy_threshold", self.fuzzy_threshold), ("anls_threshold", self.anls_threshold)] {
            if !(t > 0.0 && t <= 1.0) {
                return invalid(format!("{name} must be in (0, 1], got {t}"));
            }
        }
        if self.exec_timeout_ms < 100 {
            return invalid("exec_timeout_ms must be at least 100".into());
        }
        for (stage, b) in self.backends.named() {
            if b.model_id.trim().is_empty() {
                return invalid(format!("{stage}: model_id is empty"));
            }
            if !(0.0..=1.0).contains(&b.temperature) {
                return invalid(format!("{stage}: temperature must be in [0, 1]"));
            }
            if b.max_output_tokens == 0 {
                return invalid(format!("{stage}: max_output_tokens must be positive"));
            }
            match b.kind {
                BackendKind::Openai if b.endpoint.is_none() => {
                    return invalid(format!("{stage}: openai backend needs an endpoint"))
                }
                BackendKind::Scripted if b.mapping.is_none() => {
                    return invalid(format!("{stage}: scripted backend needs a mapping file"))
                }
                _ => {}
            }
        }
        if self.executor_command.is_none() && self.scripted_executor.is_none() {
            return invalid("set executor_command or scripted_executor".into());
        }
        Ok(())
    }

    /// The configuration as recorded in bundles and reports. Settings that
    /// cannot change results (parallelism, output location) are left out.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("parallelism");
            map.remove("output_dir");
        }
        value
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            delays: self.transport_retry_delays_ms.iter().map(|ms| Duration::from_millis(*ms)).collect(),
        }
    }
}

/// Model routes for the four model-backed stages.
#[derive(Debug, Clone)]
pub struct StageRoutes {
    pub understanding: ModelRoute,
    pub reasoning: ModelRoute,
    pub codegen: ModelRoute,
    pub explanation: ModelRoute,
}

/// Everything a run needs beyond the config: live backends and executors.
#[derive(Clone)]
pub struct Runtime {
    pub config: RunConfig,
    pub routes: StageRoutes,
    pub executor: Arc<dyn ExecutorFactory>,
}

fn route_for(config: &RunConfig, stage: &str, b: &BackendConfig) -> Result<ModelRoute, ConfigError> {
    let backend: Arc<dyn ChatBackend> = match b.kind {
        BackendKind::Scripted => {
            let path = config.resolve(b.mapping.as_deref().expect("validated"));
            Arc::new(ScriptedBackend::from_file(&path, b.strict).map_err(|e| ConfigError::Io {
                path: path.display().to_string(),
                message: format!("{stage} mapping: {e}"),
            })?)
        }
        BackendKind::Openai => Arc::new(
            OpenAiBackend::from_env(b.endpoint.as_deref().expect("validated"), &b.api_key_env)
                .with_timeout(Duration::from_millis(b.request_timeout_ms)),
        ),
    };
    let mut route = ModelRoute::new(backend, b.model_id.clone());
    route.temperature = b.temperature;
    route.max_output_tokens = b.max_output_tokens;
    Ok(route)
}

impl Runtime {
    /// Validates the config and builds backends and the executor factory.
    /// An executor command takes precedence over scripted outcomes.
    pub fn from_config(config: RunConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let b = &config.backends;
        let routes = StageRoutes {
            understanding: route_for(&config, "understanding", &b.understanding)?.with_vision(true),
            reasoning: route_for(&config, "reasoning", &b.reasoning)?,
            codegen: route_for(&config, "codegen", &b.codegen)?,
            explanation: route_for(&config, "explanation", &b.explanation)?,
        };
        let executor: Arc<dyn ExecutorFactory> = match (&config.executor_command, &config.scripted_executor) {
            (Some(command), _) => Arc::new(SubprocessFactory {
                command: command.clone(),
            }),
            (None, Some(path)) => {
                let path = config.resolve(path);
                let outcomes = ScriptedOutcomes::from_file(&path).map_err(|e| ConfigError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                Arc::new(ScriptedExecutor::new(outcomes))
            }
            (None, None) => unreachable!("validated"),
        };
        Ok(Self {
            config,
            routes,
            executor,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
          "backends": {
            "understanding": {"kind": "scripted", "model_id": "v", "mapping": "m.json"},
            "reasoning": {"kind": "scripted", "model_id": "r", "mapping": "m.json"},
            "codegen": {"kind": "openai", "model_id": "c", "endpoint": "http://localhost:8000/v1"},
            "explanation": {"kind": "scripted", "model_id": "e", "mapping": "m.json"}
          },
          "scripted_executor": "outcomes.json"
        }"#
    }

    #[test]
    fn defaults_apply() {
        let c = RunConfig::from_json(minimal(), Path::new("/cfg")).unwrap();
        assert_eq!(c.max_tries, 3);
        assert_eq!(c.extraction_max_tries, 2);
        assert_eq!(c.fuzzy_threshold, 0.75);
        assert_eq!(c.anls_threshold, 0.5);
        assert_eq!(c.exec_timeout_ms, 10_000);
        assert_eq!(c.parallelism, 4);
        assert_eq!(c.backends.codegen.api_key_env, "TABQA_API_KEY");
        assert_eq!(c.output_path(), PathBuf::from("/cfg/out"));
        c.validate().unwrap();
    }

    #[test]
    fn validation_rules() {
        let base = RunConfig::from_json(minimal(), Path::new("/cfg")).unwrap();
        let cases: Vec<Box<dyn Fn(&mut RunConfig)>> = vec![
            Box::new(|c| c.parallelism = 0),
            Box::new(|c| c.max_tries = 0),
            Box::new(|c| c.fuzzy_threshold = 0.0),
            Box::new(|c| c.anls_threshold = 1.5),
            Box::new(|c| c.exec_timeout_ms = 50),
            Box::new(|c| c.backends.codegen.endpoint = None),
            Box::new(|c| c.backends.reasoning.mapping = None),
            Box::new(|c| c.backends.reasoning.temperature = 2.0),
            Box::new(|c| c.scripted_executor = None),
        ];
        for (i, mutate) in cases.iter().enumerate() {
            let mut c = base.clone();
            mutate(&mut c);
            assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))), "case {i}");
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = minimal().replace("\"scripted_executor\"", "\"typo\": 1, \"scripted_executor\"");
        assert!(matches!(RunConfig::from_json(&text, Path::new(".")), Err(ConfigError::Malformed(_))));
    }

    #[test]
    fn snapshot_omits_scheduling() {
        let mut a = RunConfig::from_json(minimal(), Path::new("/a")).unwrap();
        let mut b = a.clone();
        a.parallelism = 1;
        b.parallelism = 4;
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.snapshot(), b.snapshot());
        assert!(a.snapshot().get("max_tries").is_some());
    }
}
