use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::Subset;

/// One question about one table image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QAInstance {
    pub id: String,
    pub subset: Subset,
    pub image_path: PathBuf,
    pub question: String,
    /// Accepted ground truths; empty only for ad-hoc single runs.
    #[serde(default)]
    pub answers: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {message}")]
    Io { path: String, message: String },
    #[error("manifest line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("manifest has no instances")]
    Empty,
}

/// Ids become file names, so they are restricted to a safe alphabet.
pub fn validate_id(id: &str) -> Result<(), String> {
    if id.is_empty() {
        return Err("id is empty".into());
    }
    if id.starts_with('.') {
        return Err(format!("id {id:?} starts with a dot"));
    }
    if !id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) {
        return Err(format!("id {id:?} may only contain letters, digits, '-', '_' and '.'"));
    }
    if id == "report" {
        return Err("id \"report\" is reserved".into());
    }
    Ok(())
}

/// Parses a JSON Lines manifest. Blank lines are ignored; relative image
/// paths are resolved against `base_dir`.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Vec<QAInstance>, ManifestError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| ManifestError::Line { line: line_no, message };
        if line.trim().is_empty() {
            continue;
        }
        let mut inst: QAInstance = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        validate_id(&inst.id).map_err(err)?;
        if !seen.insert(inst.id.clone()) {
            return Err(err(format!("duplicate id {:?}", inst.id)));
        }
        if inst.question.trim().is_empty() {
            return Err(err("question is empty".into()));
        }
        if inst.answers.is_empty() {
            return Err(err("answers must list at least one ground truth".into()));
        }
        if inst.image_path.is_relative() {
            inst.image_path = base_dir.join(&inst.image_path);
        }
        if !inst.image_path.is_file() {
            return Err(err(format!("image {} does not exist", inst.image_path.display())));
        }
        out.push(inst);
    }
    if out.is_empty() {
        return Err(ManifestError::Empty);
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<QAInstance>, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|e| ManifestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new("")))
}
