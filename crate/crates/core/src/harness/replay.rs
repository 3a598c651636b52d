//! Re-verification of a recorded bundle: the table re-parses, the recorded
//! code re-runs to the recorded answer, and the scores re-compute.

use serde::Serialize;

use super::bundle::AuditBundle;
use crate::executor::{ExecRequest, ExecutionOutcome, Executor, ExecutorError, ENTRY_POINT};
use crate::helpers::helper_library;
use crate::metrics::{score, DEFAULT_ANLS_THRESHOLD, NORMALIZATION_VERSION};
use crate::table::{parse_csv, serialize_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayVerdict {
    pub checks: Vec<Check>,
}

impl ReplayVerdict {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// One line per check, e.g. `PASS  answer  ...`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Skip => "SKIP",
            };
            out.push_str(&format!("{tag}  {:<12} {}\n", c.name, c.detail));
        }
        out.push_str(if self.passed() { "verdict: PASS\n" } else { "verdict: FAIL\n" });
        out
    }
}

fn check(name: &'static str, ok: bool, detail: impl Into<String>) -> Check {
    Check {
        name,
        status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: detail.into(),
    }
}

fn skip(name: &'static str, detail: impl Into<String>) -> Check {
    Check {
        name,
        status: CheckStatus::Skip,
        detail: detail.into(),
    }
}

/// Verifies `bundle` with a fresh executor session. Only an unreachable
/// executor is an error; every mismatch is reported as a failed check.
pub fn replay(bundle: &AuditBundle, executor: &mut dyn Executor) -> Result<ReplayVerdict, ExecutorError> {
    let mut checks = Vec::new();

    let table = bundle.stages.understanding.completed();
    let reparsed = match table {
        None => {
            checks.push(skip("table", "understanding did not complete"));
            None
        }
        Some(u) => match parse_csv(&u.csv_text) {
            Ok(t) if t == u.table => {
                checks.push(check("table", true, format!("{} rows re-parsed identically", t.row_count())));
                Some(t)
            }
            Ok(_) => {
                checks.push(check("table", false, "csv_text re-parses to a different table"));
                None
            }
            Err(e) => {
                checks.push(check("table", false, format!("csv_text no longer parses: {e}")));
                None
            }
        },
    };

    let success = bundle
        .stages
        .codegen
        .output()
        .and_then(|l| l.successful_attempt());
    let current = &helper_library().version;
    match success {
        Some(a) => checks.push(check(
            "helpers",
            &a.artifact.helpers_version == current,
            format!("recorded {} / current {current}", a.artifact.helpers_version),
        )),
        None => checks.push(skip("helpers", "no successful attempt")),
    }

    let mut rerun: Option<String> = None;
    match (success, &reparsed) {
        (Some(a), Some(t)) => {
            let response = executor.execute(&ExecRequest {
                id: format!("replay-{}", bundle.instance.id),
                code: a.artifact.source.clone(),
                table_csv: serialize_csv(t),
                entry_point: ENTRY_POINT.to_string(),
                timeout_ms: bundle
                    .config_snapshot
                    .get("exec_timeout_ms")
                    .and_then(|v| v.as_u64())
                    .unwrap_or(crate::codegen::DEFAULT_EXEC_TIMEOUT_MS),
                helpers_version: current.clone(),
            })?;
            let outcome = ExecutionOutcome::from_response(response);
            if outcome.is_success() {
                let got = outcome.result.clone().unwrap_or_default();
                let ok = Some(&got) == a.outcome.result.as_ref();
                checks.push(check(
                    "execution",
                    ok,
                    format!("re-run returned {got:?}, recorded {:?}", a.outcome.result.as_deref().unwrap_or("")),
                ));
                rerun = Some(got);
            } else {
                let msg = outcome.error.map(|e| e.message).unwrap_or_default();
                checks.push(check("execution", false, format!("re-run failed ({:?}): {msg}", outcome.status)));
            }
        }
        (Some(_), None) => checks.push(skip("execution", "no verified table to run against")),
        (None, _) => checks.push(skip("execution", "no successful attempt")),
    }

    let answer_check = match (success, &bundle.answer) {
        (None, None) => check("answer", true, "no answer recorded, none expected"),
        (None, Some(a)) => check("answer", false, format!("answer {a:?} recorded without a successful attempt")),
        (Some(_), None) => check("answer", false, "successful attempt but no answer recorded"),
        (Some(attempt), Some(answer)) => {
            let reference = rerun.as_ref().or(attempt.outcome.result.as_ref());
            check(
                "answer",
                Some(answer) == reference,
                format!("recorded {answer:?}, code yields {:?}", reference.map(String::as_str).unwrap_or("")),
            )
        }
    };
    checks.push(answer_check);

    match &bundle.scores {
        None => checks.push(skip("scores", "no ground truth")),
        Some(recorded) => {
            let threshold = bundle
                .config_snapshot
                .get("anls_threshold")
                .and_then(|v| v.as_f64())
                .unwrap_or(DEFAULT_ANLS_THRESHOLD);
            let fresh = score(&bundle.instance.id, bundle.answer.as_deref(), &bundle.instance.answers, threshold);
            let same_version = bundle.normalization == NORMALIZATION_VERSION;
            let ok = same_version
                && fresh.exact == recorded.exact
                && fresh.relieved == recorded.relieved
                && (fresh.anls - recorded.anls).abs() < 1e-12
                && fresh.ground_truths == recorded.ground_truths
                && fresh.prediction == recorded.prediction;
            checks.push(check(
                "scores",
                ok,
                format!(
                    "exact {} relieved {} anls {:.4} (recorded {} {} {:.4})",
                    fresh.exact, fresh.relieved, fresh.anls, recorded.exact, recorded.relieved, recorded.anls
                ),
            ));
        }
    }

    let seq_ok = bundle.gateway_log.iter().enumerate().all(|(i, r)| r.seq == i);
    checks.push(check(
        "gateway_log",
        seq_ok,
        format!("{} call(s), sequence {}", bundle.gateway_log.len(), if seq_ok { "contiguous" } else { "broken" }),
    ));

    Ok(ReplayVerdict { checks })
}
