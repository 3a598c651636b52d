use thiserror::Error;

use super::bundle::AuditBundle;

pub const SECTIONS: [&str; 14] = [
    "instance",
    "config",
    "plan",
    "csv",
    "table",
    "reasoning",
    "code",
    "attempts",
    "answer",
    "explanation",
    "scores",
    "stages",
    "gateway_log",
    "timestamps",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InspectError {
    #[error("unknown section {:?}; expected one of: {}", .0, SECTIONS.join(", "))]
    UnknownSection(String),
    #[error("section {0:?} is not available: the stage did not produce it")]
    Unavailable(String),
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("bundle parts serialize");
    s.push('\n');
    s
}

/// Renders one part of a bundle for reading. Text artifacts (plan, CSV,
/// code, answer, explanation) are printed raw; the rest as JSON.
pub fn render_section(bundle: &AuditBundle, section: &str) -> Result<String, InspectError> {
    let unavailable = || InspectError::Unavailable(section.to_string());
    let stages = &bundle.stages;
    Ok(match section {
        "instance" => pretty(&bundle.instance),
        "config" => pretty(&bundle.config_snapshot),
        "plan" => {
            let u = stages.understanding.output().ok_or_else(unavailable)?;
            u.plan.numbered() + "\n"
        }
        "csv" => stages.understanding.output().ok_or_else(unavailable)?.csv_text.clone(),
        "table" => pretty(&stages.understanding.output().ok_or_else(unavailable)?.table),
        "reasoning" => pretty(stages.reasoning.output().ok_or_else(unavailable)?),
        "code" => bundle.last_attempt().ok_or_else(unavailable)?.artifact.source.clone(),
        "attempts" => pretty(&stages.codegen.output().ok_or_else(unavailable)?.attempts),
        "answer" => match &bundle.answer {
            Some(a) => format!("{a}\n"),
            None => return Err(unavailable()),
        },
        "explanation" => format!("{}\n", stages.explanation.output().ok_or_else(unavailable)?.text),
        "scores" => pretty(bundle.scores.as_ref().ok_or_else(unavailable)?),
        "stages" => {
            let mut out = String::new();
            for (name, status) in [
                ("understanding", stages.understanding.status()),
                ("reasoning", stages.reasoning.status()),
                ("codegen", stages.codegen.status()),
                ("explanation", stages.explanation.status()),
            ] {
                out.push_str(&format!("{name:<14} {status}\n"));
            }
            out
        }
        "gateway_log" => pretty(&bundle.gateway_log),
        "timestamps" => pretty(&bundle.timestamps),
        other => return Err(InspectError::UnknownSection(other.to_string())),
    })
}
