//! Table understanding: a layout plan from the image, then CSV extraction
//! guided by that plan.
//!
//! The question is never sent here, so one extracted table can serve every
//! question asked about the same image.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, ImageRef, Message, ModelRoute, Part, PromptTemplate, TemplateId};
use crate::table::{parse_csv, TableDocument};

pub const DEFAULT_EXTRACTION_MAX_TRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedExtraction {
    pub csv_text: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnderstandingError {
    #[error("image is empty")]
    EmptyImage,
    #[error("unsupported image format (expected PNG or JPEG)")]
    UnsupportedImage,
    #[error("cannot read image {path}: {message}")]
    Unreadable { path: String, message: String },
    #[error("layout plan response had no content")]
    EmptyPlan,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("table extraction failed after {} attempt(s): {}", .attempts.len(), .attempts.last().map(|a| a.error.as_str()).unwrap_or("no attempts"))]
    ExtractionFailed { attempts: Vec<RejectedExtraction> },
}

/// A table image accepted by the vision stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableImage {
    image: ImageRef,
}

impl TableImage {
    /// Accepts PNG or JPEG bytes, detected by their signature.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, UnderstandingError> {
        if bytes.is_empty() {
            return Err(UnderstandingError::EmptyImage);
        }
        let media_type = if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
            "image/png"
        } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
            "image/jpeg"
        } else {
            return Err(UnderstandingError::UnsupportedImage);
        };
        Ok(Self {
            image: ImageRef::new(bytes, media_type),
        })
    }

    pub fn load(path: &Path) -> Result<Self, UnderstandingError> {
        let bytes = std::fs::read(path).map_err(|e| UnderstandingError::Unreadable {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_bytes(bytes)
    }

    pub fn media_type(&self) -> &str {
        &self.image.media_type
    }

    pub fn image_ref(&self) -> &ImageRef {
        &self.image
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionPlan {
    pub steps: Vec<String>,
    pub raw_response: String,
}

impl ExtractionPlan {
    pub fn numbered(&self) -> String {
        numbered(&self.steps)
    }
}

pub(crate) fn numbered(steps: &[String]) -> String {
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {s}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnderstandingResult {
    pub plan: ExtractionPlan,
    /// Model output after fence stripping, exactly as parsed.
    pub csv_text: String,
    pub table: TableDocument,
    pub attempts: u32,
    /// Earlier outputs that failed to parse, oldest first.
    #[serde(default)]
    pub rejected: Vec<RejectedExtraction>,
}

/// Strips a leading list marker (`1.`, `2)`, `-`, `*`, `•`) from a line.
pub(crate) fn list_item(line: &str) -> Option<&str> {
    let line = line.trim_start();
    for bullet in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(bullet) {
            return Some(rest.trim());
        }
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let rest = &line[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    if rest.is_empty() || rest.starts_with(char::is_whitespace) {
        Some(rest.trim())
    } else {
        None
    }
}

/// Splits a numbered or bulleted response into steps. Unmarked lines after
/// an item continue it; text before the first item is dropped. Without any
/// list items the whole response is a single step.
pub fn parse_plan(raw: &str) -> Result<Vec<String>, UnderstandingError> {
    let text = raw.trim();
    if text.is_empty() {
        return Err(UnderstandingError::EmptyPlan);
    }
    let mut steps: Vec<String> = Vec::new();
    for line in text.lines() {
        if let Some(item) = list_item(line) {
            steps.push(item.to_string());
        } else if let Some(last) = steps.last_mut() {
            let extra = line.trim();
            if !extra.is_empty() {
                last.push(' ');
                last.push_str(extra);
            }
        }
    }
    steps.retain(|s| !s.trim().is_empty());
    if steps.is_empty() {
        steps.push(text.to_string());
    }
    Ok(steps)
}

/// Contents of the first fenced block, or the trimmed text when there is
/// no fence, ending in exactly one newline. An unclosed fence runs to the
/// end of the text.
pub fn strip_code_fences(text: &str) -> String {
    let mut inside = false;
    let mut body: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            if inside {
                return body.join("\n").trim_matches('\n').to_string() + "\n";
            }
            inside = true;
            continue;
        }
        if inside {
            body.push(line);
        }
    }
    if inside {
        return body.join("\n").trim_matches('\n').to_string() + "\n";
    }
    text.trim().to_string() + "\n"
}

pub fn plan_extraction(
    gateway: &Gateway,
    route: &ModelRoute,
    image: &TableImage,
) -> Result<ExtractionPlan, UnderstandingError> {
    let prompt = PromptTemplate::builtin(TemplateId::ExtractionPlan)
        .render(&BTreeMap::new())
        .expect("extraction plan template has no placeholders");
    let request = route.request(
        TemplateId::ExtractionPlan,
        vec![Message::user(vec![
            Part::Image(image.image_ref().clone()),
            Part::Text(prompt),
        ])],
    );
    let response = gateway.complete(route, &request)?;
    let steps = parse_plan(&response.text)?;
    Ok(ExtractionPlan {
        steps,
        raw_response: response.text,
    })
}

fn repair_suffix(rejected: &RejectedExtraction) -> String {
    format!(
        "\n\nYour previous answer could not be parsed as CSV: {}\nPrevious answer:\n```csv\n{}\n```\nReturn the corrected CSV only.",
        rejected.error,
        rejected.csv_text.trim_end()
    )
}

/// Extracts the table as CSV, re-prompting with the parse error while
/// attempts remain (`max_tries` counts the first attempt).
pub fn extract_table(
    gateway: &Gateway,
    route: &ModelRoute,
    image: &TableImage,
    plan: &ExtractionPlan,
    max_tries: u32,
) -> Result<UnderstandingResult, UnderstandingError> {
    let base = PromptTemplate::builtin(TemplateId::ExtractCsv)
        .render(&BTreeMap::from([("plan", plan.numbered())]))
        .expect("extract_csv bindings are complete");
    let mut rejected: Vec<RejectedExtraction> = Vec::new();
    for attempt in 1..=max_tries.max(1) {
        let mut prompt = base.clone();
        if let Some(last) = rejected.last() {
            prompt.push_str(&repair_suffix(last));
        }
        let request = route.request(
            TemplateId::ExtractCsv,
            vec![Message::user(vec![
                Part::Image(image.image_ref().clone()),
                Part::Text(prompt),
            ])],
        );
        let response = gateway.complete(route, &request)?;
        let csv_text = strip_code_fences(&response.text);
        match parse_csv(&csv_text) {
            Ok(table) => {
                return Ok(UnderstandingResult {
                    plan: plan.clone(),
                    csv_text,
                    table,
                    attempts: attempt,
                    rejected,
                })
            }
            Err(e) => {
                tracing::debug!(attempt, error = %e, "extracted CSV did not parse");
                rejected.push(RejectedExtraction {
                    csv_text,
                    error: e.to_string(),
                });
            }
        }
    }
    Err(UnderstandingError::ExtractionFailed { attempts: rejected })
}
