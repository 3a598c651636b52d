use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::manifest::QAInstance;
use crate::codegen::LoopResult;
use crate::explanation::Explanation;
use crate::gateway::GatewayRecord;
use crate::metrics::ScoredInstance;
use crate::reasoning::ReasoningTrace;
use crate::understanding::UnderstandingResult;

pub const BUNDLE_FORMAT: &str = "tabqa-audit-bundle/1";

/// Outcome of one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StageRecord<T> {
    Completed {
        output: T,
    },
    Failed {
        error: String,
        /// Whatever the stage produced before failing.
        #[serde(skip_serializing_if = "Option::is_none")]
        output: Option<T>,
    },
    Skipped {
        reason: String,
    },
}

impl<T> StageRecord<T> {
    pub fn output(&self) -> Option<&T> {
        match self {
            StageRecord::Completed { output } => Some(output),
            StageRecord::Failed { output, .. } => output.as_ref(),
            StageRecord::Skipped { .. } => None,
        }
    }

    pub fn completed(&self) -> Option<&T> {
        match self {
            StageRecord::Completed { output } => Some(output),
            _ => None,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            StageRecord::Completed { .. } => "completed",
            StageRecord::Failed { .. } => "failed",
            StageRecord::Skipped { .. } => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stages {
    pub understanding: StageRecord<UnderstandingResult>,
    pub reasoning: StageRecord<ReasoningTrace>,
    pub codegen: StageRecord<LoopResult>,
    pub explanation: StageRecord<Explanation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_at: String,
    pub finished_at: String,
}

/// Self-contained record of everything one instance went through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditBundle {
    pub format: String,
    pub instance: QAInstance,
    pub config_snapshot: serde_json::Value,
    pub helpers_version: String,
    pub normalization: String,
    pub stages: Stages,
    pub answer: Option<String>,
    /// Absent when the instance carries no ground truth.
    pub scores: Option<ScoredInstance>,
    pub gateway_log: Vec<GatewayRecord>,
    pub timestamps: Timestamps,
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("cannot access bundle {path}: {message}")]
    Io { path: String, message: String },
    #[error("bundle {path} is corrupt: {message}")]
    Corrupt { path: String, message: String },
}

impl AuditBundle {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("bundle serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn file_name(id: &str) -> String {
        format!("{id}.json")
    }

    pub fn write_to(&self, dir: &Path) -> Result<PathBuf, BundleError> {
        let path = dir.join(Self::file_name(&self.instance.id));
        let io = |e: std::io::Error| BundleError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(&path, self.to_json()).map_err(io)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, BundleError> {
        let text = std::fs::read_to_string(path).map_err(|e| BundleError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let bundle = Self::from_json(&text).map_err(|e| BundleError::Corrupt {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if bundle.format != BUNDLE_FORMAT {
            return Err(BundleError::Corrupt {
                path: path.display().to_string(),
                message: format!("unknown format {:?}", bundle.format),
            });
        }
        Ok(bundle)
    }

    /// The final code attempt, successful or not.
    pub fn last_attempt(&self) -> Option<&crate::codegen::Attempt> {
        self.stages.codegen.output().and_then(|l| l.attempts.last())
    }
}
