use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{SecondsFormat, Utc};
use thiserror::Error;

use super::bundle::{AuditBundle, BundleError, StageRecord, Stages, Timestamps, BUNDLE_FORMAT};
use super::config::Runtime;
use super::manifest::QAInstance;
use crate::codegen::{run_loop, LoopError, LoopOptions, LoopResult};
use crate::executor::{Executor, ExecutorError, ExecutorFactory};
use crate::explanation::explain;
use crate::gateway::Gateway;
use crate::helpers::helper_library;
use crate::metrics::{aggregate, score, EvalReport, ScoredInstance, Subset, NORMALIZATION_VERSION};
use crate::reasoning::{derive_reasoning, reconcile};
use crate::understanding::{extract_table, plan_extraction, TableImage, UnderstandingError};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

/// A lazily opened executor session owned by one worker.
pub struct ExecutorSlot {
    factory: Arc<dyn ExecutorFactory>,
    session: Option<Box<dyn Executor>>,
}

impl ExecutorSlot {
    pub fn new(factory: Arc<dyn ExecutorFactory>) -> Self {
        Self { factory, session: None }
    }

    pub fn get(&mut self) -> Result<&mut dyn Executor, ExecutorError> {
        if self.session.is_none() {
            self.session = Some(self.factory.open()?);
        }
        Ok(self.session.as_deref_mut().expect("just opened"))
    }

    /// Drops the session so the next use starts a fresh one.
    pub fn reset(&mut self) {
        self.session = None;
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn skipped<T>(reason: &str) -> StageRecord<T> {
    StageRecord::Skipped {
        reason: reason.to_string(),
    }
}

fn failed<T>(error: impl ToString) -> StageRecord<T> {
    StageRecord::Failed {
        error: error.to_string(),
        output: None,
    }
}

/// Runs all stages for one instance. Failures are recorded in the bundle
/// and later stages are skipped; nothing here returns an error.
pub fn run_instance(runtime: &Runtime, instance: &QAInstance, executor: &mut ExecutorSlot) -> AuditBundle {
    let config = &runtime.config;
    let routes = &runtime.routes;
    let started_at = now();
    let gateway = Gateway::new(config.retry_policy());

    let understanding = TableImage::load(&instance.image_path)
        .and_then(|image| {
            let plan = plan_extraction(&gateway, &routes.understanding, &image)?;
            extract_table(&gateway, &routes.understanding, &image, &plan, config.extraction_max_tries)
        })
        .map_or_else(
            |e: UnderstandingError| failed(e),
            |output| StageRecord::Completed { output },
        );

    let reasoning = match understanding.completed() {
        None => skipped("table understanding did not complete"),
        Some(u) => match derive_reasoning(&gateway, &routes.reasoning, &u.table, &instance.question) {
            Ok(trace) => StageRecord::Completed {
                output: reconcile(&trace, &u.table, config.fuzzy_threshold),
            },
            Err(e) => failed(e),
        },
    };

    let codegen: StageRecord<LoopResult> = match (understanding.completed(), reasoning.completed()) {
        (Some(u), Some(trace)) => {
            let options = LoopOptions {
                max_tries: config.max_tries,
                timeout_ms: config.exec_timeout_ms,
                id_prefix: instance.id.clone(),
            };
            let result = executor.get().map_err(LoopError::ExecutorUnavailable).and_then(|session| {
                run_loop(&gateway, &routes.codegen, &u.table, &instance.question, trace, session, &options)
            });
            match result {
                Ok(l) if l.exhausted => StageRecord::Failed {
                    error: format!("no successful run after {} attempt(s)", l.attempts.len()),
                    output: Some(l),
                },
                Ok(l) => StageRecord::Completed { output: l },
                Err(LoopError::Generation { error, attempts }) => StageRecord::Failed {
                    error: format!("code generation failed: {error}"),
                    output: Some(LoopResult {
                        answer: None,
                        attempts,
                        exhausted: true,
                    }),
                },
                Err(e) => {
                    executor.reset();
                    failed(e)
                }
            }
        }
        _ => skipped("reasoning did not complete"),
    };

    let answer = codegen.completed().and_then(|l| l.answer.clone());
    let explanation = match codegen.completed().and_then(|l| l.successful_attempt()) {
        None => skipped("no successful code attempt"),
        Some(attempt) => match explain(
            &gateway,
            &routes.explanation,
            &attempt.artifact,
            answer.as_deref().unwrap_or_default(),
            &instance.question,
        ) {
            Ok(output) => StageRecord::Completed { output },
            Err(e) => failed(e),
        },
    };

    let scores = (!instance.answers.is_empty())
        .then(|| score(&instance.id, answer.as_deref(), &instance.answers, config.anls_threshold));

    AuditBundle {
        format: BUNDLE_FORMAT.to_string(),
        instance: instance.clone(),
        config_snapshot: config.snapshot(),
        helpers_version: helper_library().version.clone(),
        normalization: NORMALIZATION_VERSION.to_string(),
        stages: Stages {
            understanding,
            reasoning,
            codegen,
            explanation,
        },
        answer,
        scores,
        gateway_log: gateway.records(),
        timestamps: Timestamps {
            started_at,
            finished_at: now(),
        },
    }
}

/// Runs one instance and writes its bundle to the output directory.
pub fn run_one(runtime: &Runtime, instance: &QAInstance) -> Result<(AuditBundle, PathBuf), HarnessError> {
    let mut slot = ExecutorSlot::new(runtime.executor.clone());
    let bundle = run_instance(runtime, instance, &mut slot);
    let path = bundle.write_to(&runtime.config.output_path())?;
    Ok((bundle, path))
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub bundles: Vec<PathBuf>,
    pub report_json: PathBuf,
    pub report_txt: PathBuf,
}

fn write_file(path: PathBuf, text: &str) -> Result<PathBuf, HarnessError> {
    std::fs::write(&path, text).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(path)
}

/// Runs every instance with at most `parallelism` workers, each owning one
/// executor session, then writes the reports. Results are gathered in
/// manifest order, so the report does not depend on scheduling.
pub fn run_eval(runtime: &Runtime, instances: &[QAInstance]) -> Result<EvalOutcome, HarnessError> {
    let out_dir = runtime.config.output_path();
    std::fs::create_dir_all(&out_dir).map_err(|e| HarnessError::Io {
        path: out_dir.display().to_string(),
        message: e.to_string(),
    })?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<(ScoredInstance, PathBuf), BundleError>>>> =
        Mutex::new(instances.iter().map(|_| None).collect());
    let workers = runtime.config.parallelism.clamp(1, instances.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut slot = ExecutorSlot::new(runtime.executor.clone());
                loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(instance) = instances.get(i) else { break };
                    let bundle = run_instance(runtime, instance, &mut slot);
                    tracing::info!(id = %instance.id, answer = ?bundle.answer, "instance finished");
                    let scored = bundle.scores.clone().unwrap_or_else(|| {
                        score(&instance.id, bundle.answer.as_deref(), &instance.answers, runtime.config.anls_threshold)
                    });
                    let outcome = bundle.write_to(&out_dir).map(|p| (scored, p));
                    results.lock().expect("results lock")[i] = Some(outcome);
                }
            });
        }
    });
    let mut scored = Vec::with_capacity(instances.len());
    let mut bundles = Vec::with_capacity(instances.len());
    for r in results.into_inner().expect("results lock") {
        let (s, p) = r.expect("every instance was processed")?;
        scored.push(s);
        bundles.push(p);
    }
    let subsets: BTreeMap<&str, Subset> = instances.iter().map(|i| (i.id.as_str(), i.subset)).collect();
    let report = aggregate(&scored, |s| subsets[s.instance_id.as_str()], runtime.config.snapshot());
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    let report_json = write_file(out_dir.join(REPORT_JSON), &json)?;
    let report_txt = write_file(out_dir.join(REPORT_TXT), &report.to_text_table())?;
    Ok(EvalOutcome {
        report,
        bundles,
        report_json,
        report_txt,
    })
}
