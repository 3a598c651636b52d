use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    ExtractionPlan,
    ExtractCsv,
    Reasoning,
    Codegen,
    CodegenRetry,
    Explanation,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::ExtractionPlan,
        TemplateId::ExtractCsv,
        TemplateId::Reasoning,
        TemplateId::Codegen,
        TemplateId::CodegenRetry,
        TemplateId::Explanation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::ExtractionPlan => "extraction_plan",
            TemplateId::ExtractCsv => "extract_csv",
            TemplateId::Reasoning => "reasoning",
            TemplateId::Codegen => "codegen",
            TemplateId::CodegenRetry => "codegen_retry",
            TemplateId::Explanation => "explanation",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unbound placeholder {{{0}}}")]
    UnboundPlaceholder(String),
}

/// A prompt body with `{name}` placeholders. `{{` and `}}` render as
/// literal braces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: String,
}

enum Piece<'a> {
    Literal(&'a str),
    Brace(char),
    Placeholder(&'a str),
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn pieces(body: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(pos) = rest.find(['{', '}']) {
        if pos > 0 {
            out.push(Piece::Literal(&rest[..pos]));
        }
        let tail = &rest[pos..];
        if tail.starts_with("{{") || tail.starts_with("}}") {
            out.push(Piece::Brace(tail.as_bytes()[0] as char));
            rest = &tail[2..];
            continue;
        }
        if tail.starts_with('{') {
            if let Some(end) = tail.find('}') {
                let name = &tail[1..end];
                if is_ident(name) {
                    out.push(Piece::Placeholder(name));
                    rest = &tail[end + 1..];
                    continue;
                }
            }
        }
        out.push(Piece::Literal(&tail[..1]));
        rest = &tail[1..];
    }
    if !rest.is_empty() {
        out.push(Piece::Literal(rest));
    }
    out
}

impl PromptTemplate {
    pub fn new(id: TemplateId, body: impl Into<String>) -> Self {
        Self {
            id,
            body: body.into(),
        }
    }

    /// The shipped template for a stage.
    pub fn builtin(id: TemplateId) -> Self {
        let body = match id {
            TemplateId::ExtractionPlan => EXTRACTION_PLAN,
            TemplateId::ExtractCsv => EXTRACT_CSV,
            TemplateId::Reasoning => REASONING,
            TemplateId::Codegen => CODEGEN,
            TemplateId::CodegenRetry => CODEGEN_RETRY,
            TemplateId::Explanation => EXPLANATION,
        };
        Self::new(id, body)
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        pieces(&self.body)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Placeholder(name) => Some(name),
                _ => None,
            })
            .collect()
    }

    /// Substitutes every placeholder. Bound values are inserted verbatim and
    /// never re-scanned.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len());
        for piece in pieces(&self.body) {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Brace(c) => out.push(c),
                Piece::Placeholder(name) => match bindings.get(name) {
                    Some(value) => out.push_str(value),
                    None => return Err(TemplateError::UnboundPlaceholder(name.to_string())),
                },
            }
        }
        Ok(out)
    }
}

const EXTRACTION_PLAN: &str = "\
You are given an image of a table that may have a complex layout: merged cells, \
multi-row headers, several sub-tables side by side, footnotes.

Study the layout and write a numbered to-do list describing how to turn this table \
into a single flat two-dimensional table with one header row and one record per line. \
Say which header levels must be combined into column names, which group labels must \
be repeated on every row they cover, and which cells must be split or merged. \
Do not transcribe the data yet.

Answer with the numbered list only.";

const EXTRACT_CSV: &str = "\
You are given an image of a table and a plan for flattening it.

Plan:
{plan}

Follow the plan and transcribe the complete table as CSV:
- the first line is the header, one name per column;
- one record per line, every line with the same number of fields as the header;
- repeat group labels on every row they apply to instead of leaving cells empty;
- keep cell text exactly as printed (currency symbols, thousands separators, % signs);
- quote any field containing a comma with double quotes.

Answer with the CSV only.";

const REASONING: &str = "\
You will plan how to answer a question about a table. Do not compute the answer.

Table sample (CSV):
{table_preview}
Columns: {columns}

Question: {question}

Write a numbered list of concrete steps that a programmer could follow to compute \
the answer from the full table. Refer to columns by their exact names. Then list the \
columns the steps use and the equality filters they apply.

Answer with exactly these three fenced sections:
```steps
1. ...
```
```columns
<one column name per line>
```
```filters
<column> = <value>, one per line
```";

const CODEGEN: &str = "\
Write Python code using pandas that answers a question about a table.

The table is already loaded as the DataFrame `df`. Columns whose non-empty cells are \
all numbers were converted to numbers (currency symbols, thousands separators and % \
signs removed, percentages kept at face value); every other column holds strings.

Table sample (CSV):
{table_preview}
Columns and kinds:
{columns}

Question: {question}

Plan to follow:
{steps}

{insights}
These helper functions are already defined and may be called directly:
```python
{helpers}
```

Define exactly this entry point and return the answer as a string:
```python
import pandas as pd

def parse_dataframe(df: pd.DataFrame) -> str:
    # <<< MAIN LOGIC IMPLEMENTATION START >>>
    ...
    # <<< MAIN LOGIC IMPLEMENTATION END >>>
    return result
```
Only import pandas and math. Answer with one fenced python block.";

const CODEGEN_RETRY: &str = "\
Your previous code for this question failed (attempt {attempt}). Fix it.

Table sample (CSV):
{table_preview}
Columns and kinds:
{columns}

Question: {question}

Plan to follow:
{steps}

{insights}
These helper functions are already defined and may be called directly:
```python
{helpers}
```

Previous code:
```python
{previous_code}
```

Error: {error_message}
Trace:
{trace_excerpt}

Return the corrected program. It must still define `parse_dataframe(df)` returning \
a string, and may only import pandas and math. Answer with one fenced python block.";

const EXPLANATION: &str = "\
The Python function below was executed on a table to answer a question.

Question: {question}

Code:
```python
{code}
```

Result: {answer}

Explain in two or three plain sentences how this code computed the result: which \
rows it selected, which values it read or combined, and any check it performed. \
Describe only what the code does.";
