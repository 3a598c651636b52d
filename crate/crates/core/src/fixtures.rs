//! Canned model responses and executor outcomes for a small offline suite.
//!
//! The first case is the net-sales lookup over the six-row regional sales
//! table; three more cases reuse the same image with other questions, one
//! of which never produces runnable code. [`responder`] answers every prompt
//! the pipeline sends for these cases, so a run through it can be recorded
//! into a strict fingerprint mapping.

use crate::executor::{ErrorCategory, ScriptedOutcome, ScriptedOutcomes};
use crate::gateway::{ChatRequest, FnBackend, GatewayError, TemplateId};
use crate::metrics::Subset;

pub const QUESTION: &str = "What was the net sales for North America in the year 2013?";
pub const GROUND_TRUTH: &str = "$44,517";
pub const EXPECTED_ANSWER: &str = "44517";

pub const TABLE1_CSV: &str = "\
Year,Region,Net Sales,YoY % Growth,YoY % Growth (ex FX),Net Sales Mix
2011,North America,\"$26,705\",43%,43%,56%
2011,International,\"$21,372\",38%,31%,44%
2012,North America,\"$34,813\",30%,30%,57%
2012,International,\"$26,280\",23%,27%,43%
2013,North America,\"$44,517\",28%,28%,60%
2013,International,\"$29,935\",14%,19%,40%
";

pub const PLAN_RESPONSE: &str = "\
1. Read the two header rows and merge them into one name per column.
2. Repeat each year from its merged cell on every row it spans.
3. Emit one row per year and region pair.
4. Copy cell text as printed, keeping currency symbols and percent signs.";

pub fn extraction_response() -> String {
    format!("```csv\n{TABLE1_CSV}```")
}

pub const REASONING_RESPONSE: &str = "\
```steps
1. Filter the table to include only rows where the Region column is equal to \"North America\" and the Year column is equal to 2013.
2. Verify that the Net Sales column contains a numeric value for the filtered row.
3. Retrieve the value from the Net Sales column for the filtered row.
4. Ensure that no additional calculations or transformations are applied to the Net Sales value.
5. Return the retrieved Net Sales value as the final answer.
```
```columns
Region
Year
Net Sales
```
```filters
Region == \"North America\"
Year == 2013
```";

pub const CODE_LISTING: &str = "\
import pandas as pd

def parse_dataframe(df: pd.DataFrame) -> str:
    # <<< MAIN LOGIC IMPLEMENTATION START >>>
    # Step 1: Filter the DataFrame for 'North America' in 2013
    filtered_df = df[
        (df['Region'] == 'North America') & (df['Year'] == 2013)
    ]

    # Step 2: Verify that the 'Net Sales'
    # column contains a numeric value
    if not filtered_df.empty and pd.api.types.is_numeric_dtype(filtered_df['Net Sales']):
        # Step 3: Retrieve the 'Net Sales' value
        net_sales_value = filtered_df['Net Sales'].values[0]
        # Step 4: Assign to result and cast to string
        result = str(net_sales_value)
    else:
        result = \"\"
    # <<< MAIN LOGIC IMPLEMENTATION END >>>

    return result
";

pub const EXPLANATION: &str = "The net sales for North America in the year 2013 were calculated by filtering the table for that year and region, verifying the numeric value in the \u{2018}Net Sales\u{2019} column, and extracting the result.";

/// A valid 1x1 greyscale PNG standing in for the table photograph.
pub const TABLE_PNG: [u8; 67] = [
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52,
    0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x00, 0x00, 0x00, 0x00, 0x3a, 0x7e, 0x9b,
    0x55, 0x00, 0x00, 0x00, 0x0a, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0xf8, 0x0f, 0x00, 0x01,
    0x01, 0x01, 0x00, 0xb1, 0x38, 0xf6, 0x14, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae,
    0x42, 0x60, 0x82,
];

/// One question of the offline suite with every canned artifact it needs.
#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub id: &'static str,
    pub subset: Subset,
    pub question: &'static str,
    pub answers: &'static [&'static str],
    pub reasoning: &'static str,
    pub code: &'static str,
    pub outcome: ScriptedOutcome,
    pub explanation: &'static str,
}

pub fn worked_example() -> SuiteCase {
    SuiteCase {
        id: "fintabnet-net-sales-2013",
        subset: Subset::FinTabNetQa,
        question: QUESTION,
        answers: &[GROUND_TRUTH],
        reasoning: REASONING_RESPONSE,
        code: CODE_LISTING,
        outcome: ScriptedOutcome::success(EXPECTED_ANSWER),
        explanation: EXPLANATION,
    }
}

/// Four cases, one per benchmark subset. The VWTQ-Syn case fails on every
/// attempt.
pub fn suite() -> Vec<SuiteCase> {
    vec![
        SuiteCase {
            id: "vwtq-top-region-2012",
            subset: Subset::Vwtq,
            question: "Which region had the higher net sales in 2012?",
            answers: &["North America"],
            reasoning: "\
```steps
1. Keep the rows whose Year is 2012.
2. Pick the row with the largest Net Sales.
3. Return its Region.
```
```columns
Year
Net Sales
Region
```
```filters
Year == 2012
```",
            code: "\
def parse_dataframe(df):
    rows = fuzzy_filter_equals(df, \"Year\", 2012)
    best = rows.loc[rows[\"Net Sales\"].idxmax()]
    return str(best[\"Region\"])
",
            outcome: ScriptedOutcome::success("North America"),
            explanation: "The rows for 2012 were kept and the region with the largest net sales was returned.",
        },
        SuiteCase {
            id: "vwtq-syn-sales-ratio-2011",
            subset: Subset::VwtqSyn,
            question: "What is the ratio of International to North America net sales in 2011?",
            answers: &["0.80"],
            reasoning: "\
```steps
1. Keep the rows whose Year is 2011.
2. Divide the International sales by the North America sales.
```
```columns
Year
Region
Sales
```
```filters
Year == 2011
```",
            code: "\
def parse_dataframe(df):
    rows = df[df[\"Year\"] == 2011]
    intl = rows[rows[\"Region\"] == \"International\"][\"Sales\"].iloc[0]
    na = rows[rows[\"Region\"] == \"North America\"][\"Sales\"].iloc[0]
    return f\"{intl / na:.2f}\"
",
            outcome: ScriptedOutcome::failure(ErrorCategory::Runtime, "KeyError: 'Sales'"),
            explanation: "",
        },
        SuiteCase {
            id: "vtabfact-growth-2013",
            subset: Subset::VTabFact,
            question: "Is the following statement true or false: North America grew 28% year over year in 2013.",
            answers: &["true"],
            reasoning: "\
```steps
1. Keep the North America row for 2013.
2. Compare its YoY % Growth with 28.
3. Answer True when they are equal, otherwise False.
```
```columns
Region
Year
YoY % Growth
```
```filters
Region == \"North America\"
Year == 2013
```",
            code: "\
def parse_dataframe(df):
    rows = fuzzy_filter_equals(fuzzy_filter_equals(df, \"Region\", \"North America\"), \"Year\", 2013)
    return str(first_value(rows, \"YoY % Growth\") == 28)
",
            outcome: ScriptedOutcome::success("True"),
            explanation: "The North America row for 2013 was selected and its growth figure compared with 28, which matched.",
        },
        worked_example(),
    ]
}

/// Executor outcomes for every script in the suite.
pub fn executor_outcomes() -> ScriptedOutcomes {
    let mut out = ScriptedOutcomes::default();
    for case in suite() {
        out.insert(case.code, case.outcome);
    }
    out
}

fn fenced_python(code: &str) -> String {
    format!("```python\n{code}```")
}

/// Canned answer for any prompt the pipeline sends about the suite cases.
pub fn respond(request: &ChatRequest) -> Result<String, GatewayError> {
    match request.purpose {
        Some(TemplateId::ExtractionPlan) => return Ok(PLAN_RESPONSE.to_string()),
        Some(TemplateId::ExtractCsv) => return Ok(extraction_response()),
        _ => {}
    }
    let prompt = request.prompt_text();
    let case = suite()
        .into_iter()
        .find(|c| prompt.contains(c.question))
        .ok_or_else(|| GatewayError::UnmappedPrompt("prompt names no suite question".into()))?;
    match request.purpose {
        Some(TemplateId::Reasoning) => Ok(case.reasoning.to_string()),
        Some(TemplateId::Codegen | TemplateId::CodegenRetry) => Ok(fenced_python(case.code)),
        Some(TemplateId::Explanation) if !case.explanation.is_empty() => Ok(case.explanation.to_string()),
        _ => Err(GatewayError::UnmappedPrompt("unexpected prompt purpose".into())),
    }
}

/// Backend answering through [`respond`].
pub fn responder() -> FnBackend {
    FnBackend::new(respond)
}
