//! Code generation and the execute-and-retry loop.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{
    ErrorCategory, ExecError, ExecRequest, ExecStatus, ExecutionOutcome, Executor, ExecutorError, ENTRY_POINT,
};
use crate::gateway::{fingerprint, Gateway, GatewayError, Message, ModelRoute, PromptTemplate, TemplateId};
use crate::helpers::helper_library;
use crate::reasoning::ReasoningTrace;
use crate::table::{preview, serialize_csv, TableDocument};
use crate::understanding::{numbered, strip_code_fences};

pub const DEFAULT_MAX_TRIES: u32 = 3;
pub const DEFAULT_EXEC_TIMEOUT_MS: u64 = 10_000;
pub const PREVIEW_ROWS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeArtifact {
    /// 1-based.
    pub attempt: u32,
    pub source: String,
    pub prompt_fingerprint: String,
    pub helpers_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub artifact: CodeArtifact,
    pub outcome: ExecutionOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopResult {
    pub answer: Option<String>,
    pub attempts: Vec<Attempt>,
    pub exhausted: bool,
}

impl LoopResult {
    pub fn successful_attempt(&self) -> Option<&Attempt> {
        self.attempts.last().filter(|a| a.outcome.is_success())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodegenError {
    #[error("generated code does not define {ENTRY_POINT}(df)")]
    MissingEntryPoint { code: String, prompt_fingerprint: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoopError {
    #[error("max_tries must be at least 1")]
    NoTries,
    #[error(transparent)]
    ExecutorUnavailable(ExecutorError),
    #[error("code generation failed on attempt {}: {error}", .attempts.len() + 1)]
    Generation { error: GatewayError, attempts: Vec<Attempt> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopOptions {
    pub max_tries: u32,
    pub timeout_ms: u64,
    /// Request ids are `<id_prefix>-<attempt>`.
    pub id_prefix: String,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self {
            max_tries: DEFAULT_MAX_TRIES,
            timeout_ms: DEFAULT_EXEC_TIMEOUT_MS,
            id_prefix: "exec".into(),
        }
    }
}

fn entry_point_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?m)^def\s+parse_dataframe\s*\(\s*[A-Za-z_][A-Za-z0-9_]*\s*(?::[^,)]*)?\)").expect("static regex")
    })
}

/// True when `source` defines a top-level `parse_dataframe` taking exactly
/// one argument.
pub fn defines_entry_point(source: &str) -> bool {
    entry_point_re().is_match(source)
}

fn columns_with_kinds(table: &TableDocument) -> String {
    table
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| format!("- {c} ({})", table.column_kind(i).as_str()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn insights(trace: &ReasoningTrace) -> String {
    let mut out = String::new();
    if !trace.columns_used.is_empty() {
        out.push_str(&format!("Columns used: {}\n", trace.columns_used.join(", ")));
    }
    if !trace.filters.is_empty() {
        let filters: Vec<String> = trace
            .filters
            .iter()
            .map(|f| format!("{} = {:?}", f.column, f.value))
            .collect();
        out.push_str(&format!("Filters: {}\n", filters.join("; ")));
    }
    out
}

/// Renders the codegen prompt, or the retry prompt when `prior` is given.
pub fn codegen_prompt(
    table: &TableDocument,
    question: &str,
    trace: &ReasoningTrace,
    prior: Option<&Attempt>,
) -> (TemplateId, String) {
    let mut bindings = BTreeMap::from([
        ("table_preview", preview(table, PREVIEW_ROWS)),
        ("columns", columns_with_kinds(table)),
        ("question", question.trim().to_string()),
        ("steps", numbered(&trace.steps)),
        ("insights", insights(trace)),
        ("helpers", helper_library().module_source()),
    ]);
    let id = match prior {
        None => TemplateId::Codegen,
        Some(prior) => {
            let error = prior.outcome.error.clone().unwrap_or(ExecError {
                category: ErrorCategory::Protocol,
                message: "no error reported".into(),
                trace_excerpt: String::new(),
            });
            bindings.insert("attempt", prior.artifact.attempt.to_string());
            bindings.insert("previous_code", prior.artifact.source.trim_end().to_string());
            bindings.insert("error_message", error.message);
            bindings.insert("trace_excerpt", error.trace_excerpt);
            TemplateId::CodegenRetry
        }
    };
    let prompt = PromptTemplate::builtin(id)
        .render(&bindings)
        .expect("codegen bindings are complete");
    (id, prompt)
}

/// Asks the coder model for a script; the attempt index follows `prior`.
pub fn generate_code(
    gateway: &Gateway,
    route: &ModelRoute,
    table: &TableDocument,
    question: &str,
    trace: &ReasoningTrace,
    prior: Option<&Attempt>,
) -> Result<CodeArtifact, CodegenError> {
    let (id, prompt) = codegen_prompt(table, question, trace, prior);
    let request = route.request(id, vec![Message::user_text(prompt)]);
    let prompt_fingerprint = fingerprint(&request);
    let response = gateway.complete(route, &request)?;
    let source = strip_code_fences(&response.text);
    if !defines_entry_point(&source) {
        return Err(CodegenError::MissingEntryPoint {
            code: source,
            prompt_fingerprint,
        });
    }
    Ok(CodeArtifact {
        attempt: prior.map_or(1, |p| p.artifact.attempt + 1),
        source,
        prompt_fingerprint,
        helpers_version: helper_library().version.clone(),
    })
}

fn missing_entry_point(source: &str) -> ExecutionOutcome {
    let message = format!("generated code does not define {ENTRY_POINT}(df); it was not executed");
    ExecutionOutcome {
        status: ExecStatus::ScriptError,
        result: None,
        error: Some(ExecError {
            category: ErrorCategory::Syntax,
            trace_excerpt: crate::executor::truncate_trace(source),
            message,
        }),
        duration_ms: 0,
    }
}

/// Generates and executes code until a run succeeds or `max_tries` attempts
/// are spent. Each retry sees the previous attempt's code and error.
///
/// A script without the entry point counts as a failed attempt with a
/// syntax error. Executor faults abort the loop without spending retries.
pub fn run_loop(
    gateway: &Gateway,
    route: &ModelRoute,
    table: &TableDocument,
    question: &str,
    trace: &ReasoningTrace,
    executor: &mut dyn Executor,
    options: &LoopOptions,
) -> Result<LoopResult, LoopError> {
    if options.max_tries == 0 {
        return Err(LoopError::NoTries);
    }
    let table_csv = serialize_csv(table);
    let mut attempts: Vec<Attempt> = Vec::new();
    while attempts.len() < options.max_tries as usize {
        let attempt_no = attempts.len() as u32 + 1;
        let attempt = match generate_code(gateway, route, table, question, trace, attempts.last()) {
            Ok(artifact) => {
                let request = ExecRequest {
                    id: format!("{}-{attempt_no}", options.id_prefix),
                    code: artifact.source.clone(),
                    table_csv: table_csv.clone(),
                    entry_point: ENTRY_POINT.to_string(),
                    timeout_ms: options.timeout_ms,
                    helpers_version: artifact.helpers_version.clone(),
                };
                let response = executor.execute(&request).map_err(LoopError::ExecutorUnavailable)?;
                Attempt {
                    artifact,
                    outcome: ExecutionOutcome::from_response(response),
                }
            }
            Err(CodegenError::MissingEntryPoint {
                code: source,
                prompt_fingerprint,
            }) => Attempt {
                outcome: missing_entry_point(&source),
                artifact: CodeArtifact {
                    attempt: attempt_no,
                    source,
                    prompt_fingerprint,
                    helpers_version: helper_library().version.clone(),
                },
            },
            Err(CodegenError::Gateway(error)) => return Err(LoopError::Generation { error, attempts }),
        };
        tracing::debug!(attempt = attempt_no, status = ?attempt.outcome.status, "code attempt finished");
        let done = attempt.outcome.is_success();
        attempts.push(attempt);
        if done {
            break;
        }
    }
    let answer = attempts
        .last()
        .filter(|a| a.outcome.is_success())
        .and_then(|a| a.outcome.result.clone());
    Ok(LoopResult {
        exhausted: answer.is_none(),
        answer,
        attempts,
    })
}
