//! Step-by-step solution plan for a question, plus the structured insights
//! (columns and equality filters) the plan relies on.
//!
//! The model answers with three fenced sections, `steps`, `columns` and
//! `filters`. After parsing, [`reconcile`] swaps misspelled column names
//! and categorical filter values for the real ones found in the table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::fuzzy_match;
use crate::gateway::{Gateway, GatewayError, Message, ModelRoute, PromptTemplate, TemplateId};
use crate::table::{preview, to_number, TableDocument};
use crate::understanding::list_item;

/// Rows of the table shown to the reasoning model.
pub const PREVIEW_ROWS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReasoningError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("response has no parsable steps section")]
    NoSteps,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Filter {
    pub column: String,
    pub value: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconciledField {
    Column,
    FilterColumn,
    FilterValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconciliation {
    pub field: ReconciledField,
    pub original: String,
    pub replacement: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub steps: Vec<String>,
    pub columns_used: Vec<String>,
    pub filters: Vec<Filter>,
    pub raw_response: String,
    #[serde(default)]
    pub reconciliations: Vec<Reconciliation>,
    /// Names that matched nothing in the table and were left as written.
    #[serde(default)]
    pub unresolved: Vec<String>,
}

fn fenced_sections(raw: &str) -> BTreeMap<String, Vec<String>> {
    let mut sections = BTreeMap::new();
    let mut current: Option<(String, Vec<String>)> = None;
    for line in raw.lines() {
        let trimmed = line.trim();
        if let Some(label) = trimmed.strip_prefix("```") {
            match current.take() {
                Some((name, body)) => {
                    sections.entry(name).or_insert(body);
                }
                None => current = Some((label.trim().to_lowercase(), Vec::new())),
            }
            continue;
        }
        if let Some((_, body)) = current.as_mut() {
            body.push(line.to_string());
        }
    }
    if let Some((name, body)) = current {
        sections.entry(name).or_insert(body);
    }
    sections
}

fn items(lines: &[String]) -> Vec<String> {
    lines
        .iter()
        .map(|l| list_item(l).unwrap_or(l.trim()).to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    for q in ['"', '\'', '`'] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return &s[1..s.len() - 1];
        }
    }
    s
}

fn parse_filter(line: &str) -> Option<Filter> {
    let (column, value) = line.split_once("==").or_else(|| line.split_once('='))?;
    let column = unquote(column);
    if column.is_empty() {
        return None;
    }
    Some(Filter {
        column: column.to_string(),
        value: unquote(value).to_string(),
    })
}

/// Parses the fenced `steps` / `columns` / `filters` sections. Missing
/// columns or filters sections give empty lists.
pub fn parse_reasoning(raw: &str) -> Result<ReasoningTrace, ReasoningError> {
    let sections = fenced_sections(raw);
    let steps = sections.get("steps").map(|s| items(s)).unwrap_or_default();
    if steps.is_empty() {
        return Err(ReasoningError::NoSteps);
    }
    let columns_used = sections
        .get("columns")
        .map(|s| items(s).iter().map(|c| unquote(c).to_string()).collect())
        .unwrap_or_default();
    let filters = sections
        .get("filters")
        .map(|s| items(s).iter().filter_map(|l| parse_filter(l)).collect())
        .unwrap_or_default();
    Ok(ReasoningTrace {
        steps,
        columns_used,
        filters,
        raw_response: raw.to_string(),
        reconciliations: Vec::new(),
        unresolved: Vec::new(),
    })
}

pub fn reasoning_prompt(table: &TableDocument, question: &str) -> String {
    PromptTemplate::builtin(TemplateId::Reasoning)
        .render(&BTreeMap::from([
            ("table_preview", preview(table, PREVIEW_ROWS)),
            ("columns", table.columns.join(", ")),
            ("question", question.trim().to_string()),
        ]))
        .expect("reasoning bindings are complete")
}

/// Asks the reasoning model for a plan. The trace is not yet reconciled.
pub fn derive_reasoning(
    gateway: &Gateway,
    route: &ModelRoute,
    table: &TableDocument,
    question: &str,
) -> Result<ReasoningTrace, ReasoningError> {
    if question.trim().is_empty() {
        return Err(ReasoningError::EmptyQuestion);
    }
    let request = route.request(
        TemplateId::Reasoning,
        vec![Message::user_text(reasoning_prompt(table, question))],
    );
    let response = gateway.complete(route, &request)?;
    parse_reasoning(&response.text)
}

struct Reconciler<'a> {
    table: &'a TableDocument,
    threshold: f64,
    records: Vec<Reconciliation>,
    unresolved: Vec<String>,
}

impl Reconciler<'_> {
    fn column(&mut self, name: &str, field: ReconciledField) -> String {
        match fuzzy_match(name, &self.table.columns, self.threshold) {
            Some(hit) if hit.candidate == name => hit.candidate,
            Some(hit) => {
                self.records.push(Reconciliation {
                    field,
                    original: name.to_string(),
                    replacement: hit.candidate.clone(),
                    similarity: hit.similarity,
                });
                hit.candidate
            }
            None => {
                self.flag(format!("column {name:?}"));
                name.to_string()
            }
        }
    }

    fn value(&mut self, column: &str, value: &str) -> String {
        // numbers are never fuzzed: a nearby year would silently change the question
        if to_number(value).is_some() {
            return value.to_string();
        }
        let Some(idx) = self.table.column_index(column) else {
            return value.to_string();
        };
        let distinct = self.table.distinct_text_values(idx);
        if distinct.is_empty() {
            return value.to_string();
        }
        match fuzzy_match(value, &distinct, self.threshold) {
            Some(hit) if hit.candidate == value => hit.candidate,
            Some(hit) => {
                self.records.push(Reconciliation {
                    field: ReconciledField::FilterValue,
                    original: value.to_string(),
                    replacement: hit.candidate.clone(),
                    similarity: hit.similarity,
                });
                hit.candidate
            }
            None => {
                self.flag(format!("value {value:?} in column {column:?}"));
                value.to_string()
            }
        }
    }

    fn flag(&mut self, what: String) {
        if !self.unresolved.contains(&what) {
            self.unresolved.push(what);
        }
    }
}

/// Replaces column names and categorical filter values with their closest
/// real counterparts. Step text is left untouched. Applying it twice gives
/// the same trace as applying it once.
pub fn reconcile(trace: &ReasoningTrace, table: &TableDocument, threshold: f64) -> ReasoningTrace {
    let mut r = Reconciler {
        table,
        threshold,
        records: Vec::new(),
        unresolved: Vec::new(),
    };
    let columns_used = trace
        .columns_used
        .iter()
        .map(|c| r.column(c, ReconciledField::Column))
        .collect();
    let filters = trace
        .filters
        .iter()
        .map(|f| {
            let column = r.column(&f.column, ReconciledField::FilterColumn);
            let value = r.value(&column, &f.value);
            Filter { column, value }
        })
        .collect();
    let mut reconciliations = trace.reconciliations.clone();
    reconciliations.extend(r.records);
    ReasoningTrace {
        steps: trace.steps.clone(),
        columns_used,
        filters,
        raw_response: trace.raw_response.clone(),
        reconciliations,
        unresolved: r.unresolved,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::table::parse_csv;

    fn table1() -> TableDocument {
        parse_csv(fixtures::TABLE1_CSV).unwrap()
    }

    #[test]
    fn parses_worked_example_response() {
        let t = parse_reasoning(fixtures::REASONING_RESPONSE).unwrap();
        assert_eq!(t.steps.len(), 5);
        assert!(t.steps[0].starts_with("Filter the table"));
        assert_eq!(t.columns_used, ["Region", "Year", "Net Sales"]);
        assert_eq!(
            t.filters,
            [
                Filter { column: "Region".into(), value: "North America".into() },
                Filter { column: "Year".into(), value: "2013".into() },
            ]
        );
    }

    #[test]
    fn steps_only_is_accepted() {
        let t = parse_reasoning("```steps\n1. Count rows\n```").unwrap();
        assert_eq!(t.steps, ["Count rows"]);
        assert!(t.columns_used.is_empty());
        assert!(t.filters.is_empty());
    }

    #[test]
    fn missing_steps_is_an_error() {
        assert_eq!(
            parse_reasoning("```columns\nYear\n```"),
            Err(ReasoningError::NoSteps)
        );
        assert_eq!(parse_reasoning("just prose"), Err(ReasoningError::NoSteps));
    }

    #[test]
    fn filter_syntax_variants() {
        assert_eq!(
            parse_filter("'Region' == \"North America\""),
            Some(Filter { column: "Region".into(), value: "North America".into() })
        );
        assert_eq!(parse_filter("no operator"), None);
        assert_eq!(parse_filter("= 5"), None);
    }

    fn trace(columns: &[&str], filters: &[(&str, &str)]) -> ReasoningTrace {
        ReasoningTrace {
            steps: vec!["s".into()],
            columns_used: columns.iter().map(|c| c.to_string()).collect(),
            filters: filters
                .iter()
                .map(|(c, v)| Filter { column: c.to_string(), value: v.to_string() })
                .collect(),
            raw_response: String::new(),
            reconciliations: Vec::new(),
            unresolved: Vec::new(),
        }
    }

    #[test]
    fn lowercase_column_is_replaced() {
        let out = reconcile(&trace(&[], &[("region", "North America")]), &table1(), 0.75);
        assert_eq!(out.filters[0].column, "Region");
        assert_eq!(out.reconciliations.len(), 1);
        assert_eq!(out.reconciliations[0].similarity, 1.0);
    }

    #[test]
    fn exact_trace_is_a_fixpoint() {
        let t = trace(&["Region", "Year"], &[("Region", "North America"), ("Year", "2013")]);
        let out = reconcile(&t, &table1(), 0.75);
        assert_eq!(out, t);
    }

    #[test]
    fn misspelled_value_is_replaced() {
        let out = reconcile(&trace(&[], &[("Region", "Internatonal")]), &table1(), 0.75);
        assert_eq!(out.filters[0].value, "International");
        assert!((out.reconciliations[0].similarity - 12.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn numeric_values_are_never_fuzzed() {
        let out = reconcile(&trace(&[], &[("Year", "2014")]), &table1(), 0.75);
        assert_eq!(out.filters[0].value, "2014");
        assert!(out.reconciliations.is_empty());
    }

    #[test]
    fn unmatched_names_are_flagged_and_kept() {
        let out = reconcile(&trace(&["Profit"], &[("Region", "Antarctica")]), &table1(), 0.75);
        assert_eq!(out.columns_used, ["Profit"]);
        assert_eq!(out.filters[0].value, "Antarctica");
        assert_eq!(out.unresolved.len(), 2);
        assert_eq!(reconcile(&out, &table1(), 0.75), out);
    }
}
