//! Natural-language explanation of the code that produced the answer.
//!
//! The prompt carries only the executed source, the answer and the
//! question. The reasoning trace is left out on purpose so the prose
//! describes what actually ran.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::CodeArtifact;
use crate::gateway::{Gateway, GatewayError, Message, ModelRoute, PromptTemplate, TemplateId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub text: String,
    /// Index of the code attempt being explained.
    pub source_attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExplanationError {
    #[error("explanation response was blank")]
    Blank,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

pub fn explanation_prompt(code: &CodeArtifact, answer: &str, question: &str) -> String {
    let shown = if answer.is_empty() { "(empty string)" } else { answer };
    PromptTemplate::builtin(TemplateId::Explanation)
        .render(&BTreeMap::from([
            ("question", question.trim().to_string()),
            ("code", code.source.trim_end().to_string()),
            ("answer", shown.to_string()),
        ]))
        .expect("explanation bindings are complete")
}

pub fn explain(
    gateway: &Gateway,
    route: &ModelRoute,
    code: &CodeArtifact,
    answer: &str,
    question: &str,
) -> Result<Explanation, ExplanationError> {
    let request = route.request(
        TemplateId::Explanation,
        vec![Message::user_text(explanation_prompt(code, answer, question))],
    );
    let response = gateway.complete(route, &request)?;
    let text = response.text.trim();
    if text.is_empty() {
        return Err(ExplanationError::Blank);
    }
    Ok(Explanation {
        text: text.to_string(),
        source_attempt: code.attempt,
    })
}
