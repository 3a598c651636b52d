//! Client side of the script executor protocol.
//!
//! An executor session runs one generated script at a time. The real
//! executor is a child process speaking line-delimited JSON on its standard
//! streams: one [`ExecRequest`] per line in, one [`ExecResponse`] per line
//! out, ids echoed. [`ScriptedExecutor`] satisfies the same contract
//! in-process for tests and offline runs.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::helpers::helper_library;

pub const ENTRY_POINT: &str = "parse_dataframe";

/// Longest trace excerpt kept from a failed execution.
pub const MAX_TRACE_EXCERPT: usize = 2000;

/// Extra time granted to the executor beyond the script timeout before the
/// session is considered dead.
pub const KILL_GRACE: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecRequest {
    pub id: String,
    pub code: String,
    pub table_csv: String,
    pub entry_point: String,
    pub timeout_ms: u64,
    pub helpers_version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Success,
    ScriptError,
    Timeout,
    ProtocolError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Syntax,
    Runtime,
    Timeout,
    Protocol,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecError {
    pub category: ErrorCategory,
    pub message: String,
    #[serde(default)]
    pub trace_excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecResponse {
    pub id: String,
    pub status: ExecStatus,
    #[serde(default)]
    pub result: Option<String>,
    #[serde(default)]
    pub error: Option<ExecError>,
    #[serde(default)]
    pub duration_ms: u64,
}

/// Result of one script attempt as recorded by the retry loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecStatus,
    pub result: Option<String>,
    pub error: Option<ExecError>,
    pub duration_ms: u64,
}

impl ExecutionOutcome {
    pub fn is_success(&self) -> bool {
        self.status == ExecStatus::Success
    }

    /// Normalizes a wire response so exactly one of result/error is set and
    /// the trace excerpt is bounded.
    pub fn from_response(resp: ExecResponse) -> Self {
        if resp.status == ExecStatus::Success {
            return Self {
                status: ExecStatus::Success,
                result: Some(resp.result.unwrap_or_default()),
                error: None,
                duration_ms: resp.duration_ms,
            };
        }
        let mut error = resp.error.unwrap_or_else(|| ExecError {
            category: match resp.status {
                ExecStatus::Timeout => ErrorCategory::Timeout,
                ExecStatus::ScriptError => ErrorCategory::Runtime,
                _ => ErrorCategory::Protocol,
            },
            message: "executor reported a failure without details".into(),
            trace_excerpt: String::new(),
        });
        error.trace_excerpt = truncate_trace(&error.trace_excerpt);
        Self {
            status: resp.status,
            result: None,
            error: Some(error),
            duration_ms: resp.duration_ms,
        }
    }
}

/// Keeps the last [`MAX_TRACE_EXCERPT`] characters; Python tracebacks end
/// with the raising frame and the exception.
pub fn truncate_trace(trace: &str) -> String {
    let count = trace.chars().count();
    if count <= MAX_TRACE_EXCERPT {
        return trace.to_string();
    }
    trace.chars().skip(count - MAX_TRACE_EXCERPT).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecutorError {
    #[error("executor unavailable: {0}")]
    Unavailable(String),
    #[error("executor protocol violation: {0}")]
    Protocol(String),
}

/// One executor session; at most one request in flight.
pub trait Executor: Send {
    fn execute(&mut self, request: &ExecRequest) -> Result<ExecResponse, ExecutorError>;
}

/// Opens independent executor sessions, one per concurrent worker.
pub trait ExecutorFactory: Send + Sync {
    fn open(&self) -> Result<Box<dyn Executor>, ExecutorError>;
}

/// Executor child process driven over its standard streams.
pub struct SubprocessExecutor {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    dead: Option<String>,
    grace: Duration,
}

impl SubprocessExecutor {
    /// Spawns `command`, split with shell quoting rules.
    pub fn spawn(command: &str) -> Result<Self, ExecutorError> {
        let argv = shlex::split(command)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| ExecutorError::Unavailable(format!("cannot parse command {command:?}")))?;
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ExecutorError::Unavailable(format!("cannot start {command:?}: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            dead: None,
            grace: KILL_GRACE,
        })
    }

    /// Overrides [`KILL_GRACE`] for this session.
    pub fn with_grace(mut self, grace: Duration) -> Self {
        self.grace = grace;
        self
    }

    fn fail(&mut self, why: String) -> ExecutorError {
        let _ = self.child.kill();
        let _ = self.child.wait();
        self.stdin = None;
        self.dead = Some(why.clone());
        ExecutorError::Unavailable(why)
    }
}

impl Executor for SubprocessExecutor {
    fn execute(&mut self, request: &ExecRequest) -> Result<ExecResponse, ExecutorError> {
        if let Some(why) = &self.dead {
            return Err(ExecutorError::Unavailable(why.clone()));
        }
        let mut line = serde_json::to_string(request)
            .map_err(|e| ExecutorError::Protocol(e.to_string()))?;
        line.push('\n');
        let write = match self.stdin.as_mut() {
            Some(stdin) => stdin.write_all(line.as_bytes()).and_then(|()| stdin.flush()),
            None => Err(std::io::Error::other("stdin closed")),
        };
        if let Err(e) = write {
            return Err(self.fail(format!("cannot write to executor: {e}")));
        }
        let wait = Duration::from_millis(request.timeout_ms) + self.grace;
        let reply = match self.lines.recv_timeout(wait) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(self.fail(format!("cannot read executor output: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(self.fail(format!("no response within {} ms", wait.as_millis())))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(self.fail("executor closed its output".into()))
            }
        };
        let resp: ExecResponse = serde_json::from_str(&reply)
            .map_err(|e| ExecutorError::Protocol(format!("unparseable response line: {e}")))?;
        if resp.id != request.id {
            return Err(ExecutorError::Protocol(format!(
                "response id {:?} does not match request id {:?}",
                resp.id, request.id
            )));
        }
        Ok(resp)
    }
}

impl Drop for SubprocessExecutor {
    fn drop(&mut self) {
        // closing stdin lets a well-behaved executor exit on its own
        self.stdin = None;
        if !matches!(self.child.try_wait(), Ok(Some(_))) {
            thread::sleep(Duration::from_millis(20));
            if !matches!(self.child.try_wait(), Ok(Some(_))) {
                let _ = self.child.kill();
            }
        }
        let _ = self.child.wait();
    }
}

#[derive(Debug, Clone)]
pub struct SubprocessFactory {
    pub command: String,
}

impl ExecutorFactory for SubprocessFactory {
    fn open(&self) -> Result<Box<dyn Executor>, ExecutorError> {
        Ok(Box::new(SubprocessExecutor::spawn(&self.command)?))
    }
}

/// Canned outcome for one script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedOutcome {
    pub status: ExecStatus,
    #[serde(default)]
    pub result: Option<String>,
    #[serde(default)]
    pub error: Option<ExecError>,
}

impl ScriptedOutcome {
    pub fn success(result: impl Into<String>) -> Self {
        Self {
            status: ExecStatus::Success,
            result: Some(result.into()),
            error: None,
        }
    }

    pub fn failure(category: ErrorCategory, message: impl Into<String>) -> Self {
        let status = match category {
            ErrorCategory::Syntax | ErrorCategory::Runtime => ExecStatus::ScriptError,
            ErrorCategory::Timeout => ExecStatus::Timeout,
            ErrorCategory::Protocol => ExecStatus::ProtocolError,
        };
        let message = message.into();
        Self {
            status,
            result: None,
            error: Some(ExecError {
                category,
                trace_excerpt: format!("Traceback (most recent call last):\n{message}"),
                message,
            }),
        }
    }
}

/// Key identifying a script in a scripted outcome table.
pub fn code_key(code: &str) -> String {
    hex::encode(Sha256::digest(code.as_bytes()))
}

/// On-disk form of a scripted executor: outcomes keyed by [`code_key`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedOutcomes {
    #[serde(default)]
    pub outcomes: BTreeMap<String, ScriptedOutcome>,
    #[serde(default)]
    pub fallback: Option<ScriptedOutcome>,
}

impl ScriptedOutcomes {
    pub fn insert(&mut self, code: &str, outcome: ScriptedOutcome) {
        self.outcomes.insert(code_key(code), outcome);
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// In-process fake executor returning canned outcomes per script.
///
/// Honors the protocol: ids are echoed and a helper-stock mismatch is a
/// protocol error. Unknown scripts get the fallback, or a protocol error
/// when there is none.
#[derive(Debug, Clone)]
pub struct ScriptedExecutor {
    table: Arc<ScriptedOutcomes>,
    calls: Arc<AtomicUsize>,
}

impl ScriptedExecutor {
    pub fn new(table: ScriptedOutcomes) -> Self {
        Self {
            table: Arc::new(table),
            calls: Arc::new(AtomicUsize::new(0)),
        }
    }

    /// Executor that answers every script with the same outcome.
    pub fn always(outcome: ScriptedOutcome) -> Self {
        Self::new(ScriptedOutcomes {
            outcomes: BTreeMap::new(),
            fallback: Some(outcome),
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Executor for ScriptedExecutor {
    fn execute(&mut self, request: &ExecRequest) -> Result<ExecResponse, ExecutorError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let protocol = |message: String| ExecResponse {
            id: request.id.clone(),
            status: ExecStatus::ProtocolError,
            result: None,
            error: Some(ExecError {
                category: ErrorCategory::Protocol,
                message,
                trace_excerpt: String::new(),
            }),
            duration_ms: 0,
        };
        if request.helpers_version != helper_library().version {
            return Ok(protocol(format!(
                "helpers_version {} does not match executor stock {}",
                request.helpers_version,
                helper_library().version
            )));
        }
        let outcome = self
            .table
            .outcomes
            .get(&code_key(&request.code))
            .or(self.table.fallback.as_ref());
        Ok(match outcome {
            Some(o) => ExecResponse {
                id: request.id.clone(),
                status: o.status,
                result: o.result.clone(),
                error: o.error.clone(),
                duration_ms: 0,
            },
            None => protocol("no scripted outcome for this code".into()),
        })
    }
}

impl ExecutorFactory for ScriptedExecutor {
    fn open(&self) -> Result<Box<dyn Executor>, ExecutorError> {
        Ok(Box::new(self.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(code: &str) -> ExecRequest {
        ExecRequest {
            id: "r1".into(),
            code: code.into(),
            table_csv: "A\n1\n".into(),
            entry_point: ENTRY_POINT.into(),
            timeout_ms: 1000,
            helpers_version: helper_library().version.clone(),
        }
    }

    #[test]
    fn wire_shape() {
        let json = serde_json::to_value(request("x")).unwrap();
        for key in ["id", "code", "table_csv", "entry_point", "timeout_ms", "helpers_version"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let resp: ExecResponse = serde_json::from_str(
            r#"{"id":"r1","status":"script_error","error":{"category":"syntax","message":"bad","trace_excerpt":""},"duration_ms":3}"#,
        )
        .unwrap();
        assert_eq!(resp.status, ExecStatus::ScriptError);
        assert_eq!(resp.error.unwrap().category, ErrorCategory::Syntax);
    }

    #[test]
    fn outcome_has_exactly_one_of_result_or_error() {
        let ok = ExecutionOutcome::from_response(ExecResponse {
            id: "a".into(),
            status: ExecStatus::Success,
            result: None,
            error: None,
            duration_ms: 1,
        });
        assert_eq!(ok.result.as_deref(), Some(""));
        assert!(ok.error.is_none());
        let bad = ExecutionOutcome::from_response(ExecResponse {
            id: "a".into(),
            status: ExecStatus::Timeout,
            result: Some("ignored".into()),
            error: None,
            duration_ms: 1,
        });
        assert!(bad.result.is_none());
        assert_eq!(bad.error.unwrap().category, ErrorCategory::Timeout);
    }

    #[test]
    fn trace_excerpt_is_bounded() {
        let long = format!("{}END", "x".repeat(5000));
        let t = truncate_trace(&long);
        assert_eq!(t.chars().count(), MAX_TRACE_EXCERPT);
        assert!(t.ends_with("END"));
    }

    #[test]
    fn scripted_executor_keys_on_code() {
        let mut table = ScriptedOutcomes::default();
        table.insert("good", ScriptedOutcome::success("44517"));
        let mut exec = ScriptedExecutor::new(table);
        let resp = exec.execute(&request("good")).unwrap();
        assert_eq!(resp.id, "r1");
        assert_eq!(resp.result.as_deref(), Some("44517"));
        assert_eq!(exec.execute(&request("other")).unwrap().status, ExecStatus::ProtocolError);
        assert_eq!(exec.calls(), 2);
    }

    #[test]
    fn scripted_executor_checks_helper_stock() {
        let mut exec = ScriptedExecutor::always(ScriptedOutcome::success("1"));
        let mut req = request("x");
        req.helpers_version = "sha256:stale".into();
        assert_eq!(exec.execute(&req).unwrap().status, ExecStatus::ProtocolError);
    }

    #[test]
    fn missing_program_is_unavailable() {
        assert!(matches!(
            SubprocessExecutor::spawn("/nonexistent/executor --serve"),
            Err(ExecutorError::Unavailable(_))
        ));
        assert!(matches!(
            SubprocessExecutor::spawn("\"unterminated"),
            Err(ExecutorError::Unavailable(_))
        ));
    }
}
