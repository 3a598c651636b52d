//! Pre-made helper functions offered to generated code.
//!
//! The Python sources below are embedded verbatim in the code-generation
//! prompt and must match the stock preloaded by the executor; both sides
//! identify the stock by [`HelperLibrary::version`]. The Rust functions in
//! this module mirror the Python semantics and serve as the reference for
//! the shared test vectors.

use std::sync::OnceLock;

use rust_decimal::Decimal;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::fuzzy::{fuzzy_match, DEFAULT_FUZZY_THRESHOLD};
use crate::table::{to_number as cell_number, CellValue, TableDocument};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HelperDef {
    pub name: &'static str,
    pub signature: &'static str,
    pub doc: &'static str,
    pub source: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HelperLibrary {
    pub version: String,
    pub definitions: Vec<HelperDef>,
}

impl HelperLibrary {
    /// All definitions as one Python module, in declaration order.
    pub fn module_source(&self) -> String {
        module_source(&self.definitions)
    }
}

fn module_source(defs: &[HelperDef]) -> String {
    let mut out = defs
        .iter()
        .map(|d| d.source.trim_end())
        .collect::<Vec<_>>()
        .join("\n\n\n");
    out.push('\n');
    out
}

/// The fixed helper stock. `version` is `sha256:` plus the hex digest of
/// [`HelperLibrary::module_source`].
pub fn helper_library() -> &'static HelperLibrary {
    static LIB: OnceLock<HelperLibrary> = OnceLock::new();
    LIB.get_or_init(|| {
        let definitions = DEFINITIONS.to_vec();
        let version = format!(
            "sha256:{}",
            hex::encode(Sha256::digest(module_source(&definitions).as_bytes()))
        );
        HelperLibrary {
            version,
            definitions,
        }
    })
}

const DEFINITIONS: [HelperDef; 6] = [
    HelperDef {
        name: "_similarity",
        signature: "_similarity(a, b) -> float",
        doc: "Case-insensitive 1 - levenshtein / longer length over trimmed strings.",
        source: r#"def _similarity(a, b):
    """Case-insensitive 1 - levenshtein / longer length over trimmed strings."""
    a = str(a).strip().lower()
    b = str(b).strip().lower()
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a):
        cur = [i + 1]
        for j, cb in enumerate(b):
            cur.append(min(prev[j] + (ca != cb), prev[j + 1] + 1, cur[j] + 1))
        prev = cur
    return 1.0 - prev[len(b)] / longest
"#,
    },
    HelperDef {
        name: "_best_match",
        signature: "_best_match(query, candidates, threshold=0.75) -> str | None",
        doc: "Verbatim candidate if present, else the most similar one at or above threshold (earliest wins ties).",
        source: r#"def _best_match(query, candidates, threshold=0.75):
    """Verbatim candidate if present, else the most similar one at or above threshold (earliest wins ties)."""
    candidates = list(candidates)
    if query in candidates:
        return query
    best, best_score = None, -1.0
    for c in candidates:
        score = _similarity(query, c)
        if score > best_score:
            best, best_score = c, score
    return best if best is not None and best_score >= threshold else None
"#,
    },
    HelperDef {
        name: "to_number",
        signature: "to_number(cell_text) -> int | float | None",
        doc: "Number in a cell such as \"$44,517\", \"28%\", \"1,234\" or \"-3.5\"; None when the text is not numeric. Percentages keep their face value.",
        source: r#"def to_number(cell_text):
    """Number in a cell such as "$44,517", "28%", "1,234" or "-3.5"; None when the text is not numeric.

    Percentages keep their face value ("28%" -> 28). Whole numbers come back as int.
    """
    if cell_text is None:
        return None
    if isinstance(cell_text, bool):
        return None
    if isinstance(cell_text, (int, float)):
        return cell_text
    digits = "0123456789"
    s = str(cell_text).strip()
    sign = ""
    if s[:1] in ("+", "-"):
        sign, s = s[0], s[1:]
    has_symbol = s[:1] in ("$", "€", "£")
    if has_symbol:
        s = s[1:]
        if s[:1] == " ":
            s = s[1:]
    if s.endswith("%"):
        if has_symbol:
            return None
        s = s[:-1]
        if s.endswith(" "):
            s = s[:-1]
    whole, dot, frac = s.partition(".")
    if dot and (frac == "" or any(c not in digits for c in frac)):
        return None
    groups = whole.split(",")
    if any(g == "" or any(c not in digits for c in g) for g in groups):
        return None
    if len(groups) > 1 and (len(groups[0]) > 3 or any(len(g) != 3 for g in groups[1:])):
        return None
    text = ("-" if sign == "-" else "") + "".join(groups)
    return float(text + dot + frac) if dot else int(text)
"#,
    },
    HelperDef {
        name: "fuzzy_lookup_column",
        signature: "fuzzy_lookup_column(df, name) -> str | None",
        doc: "Real column name closest to `name` (similarity >= 0.75), or None.",
        source: r#"def fuzzy_lookup_column(df, name):
    """Real column name closest to `name` (similarity >= 0.75), or None."""
    return _best_match(name, [str(c) for c in df.columns])
"#,
    },
    HelperDef {
        name: "fuzzy_filter_equals",
        signature: "fuzzy_filter_equals(df, column, value) -> DataFrame",
        doc: "Rows whose `column` equals `value`. Column names and text values are matched fuzzily; numeric values are compared as numbers and never fuzzed.",
        source: r#"def fuzzy_filter_equals(df, column, value):
    """Rows whose `column` equals `value`.

    Column names and text values are matched fuzzily; numeric values are
    compared as numbers and never fuzzed.
    """
    col = fuzzy_lookup_column(df, column)
    if col is None:
        return df.iloc[0:0]
    wanted = to_number(value)
    if wanted is not None:
        return df[[to_number(v) == wanted for v in df[col]]]
    texts = [str(v) for v in df[col] if to_number(v) is None and str(v).strip() != ""]
    distinct = list(dict.fromkeys(texts))
    match = _best_match(str(value), distinct)
    if match is None:
        return df.iloc[0:0]
    return df[[str(v) == match for v in df[col]]]
"#,
    },
    HelperDef {
        name: "first_value",
        signature: "first_value(df, column) -> object | None",
        doc: "First value of the (fuzzily resolved) column, or None for an empty table or unknown column.",
        source: r#"def first_value(df, column):
    """First value of the (fuzzily resolved) column, or None for an empty table or unknown column."""
    col = fuzzy_lookup_column(df, column)
    if col is None or len(df) == 0:
        return None
    return df[col].iloc[0]
"#,
    },
];

/// Mirror of the Python `to_number` helper.
pub fn to_number(cell_text: &str) -> Option<Decimal> {
    cell_number(cell_text)
}

/// Mirror of the Python `fuzzy_lookup_column` helper.
pub fn fuzzy_lookup_column(table: &TableDocument, name: &str) -> Option<String> {
    fuzzy_match(name, &table.columns, DEFAULT_FUZZY_THRESHOLD).map(|hit| hit.candidate)
}

/// Mirror of the Python `fuzzy_filter_equals` helper.
pub fn fuzzy_filter_equals(table: &TableDocument, column: &str, value: &str) -> TableDocument {
    let empty = TableDocument {
        columns: table.columns.clone(),
        rows: Vec::new(),
        repair_notes: Vec::new(),
    };
    let Some(idx) = fuzzy_lookup_column(table, column).and_then(|c| table.column_index(&c)) else {
        return empty;
    };
    let keep: Box<dyn Fn(&CellValue) -> bool> = match to_number(value) {
        Some(wanted) => Box::new(move |c: &CellValue| c.numeric == Some(wanted)),
        None => {
            let distinct = table.distinct_text_values(idx);
            match fuzzy_match(value, &distinct, DEFAULT_FUZZY_THRESHOLD) {
                Some(hit) => Box::new(move |c: &CellValue| c.raw == hit.candidate),
                None => return empty,
            }
        }
    };
    TableDocument {
        rows: table.rows.iter().filter(|r| keep(&r[idx])).cloned().collect(),
        ..empty
    }
}

/// Mirror of the Python `first_value` helper.
pub fn first_value(table: &TableDocument, column: &str) -> Option<CellValue> {
    let idx = fuzzy_lookup_column(table, column).and_then(|c| table.column_index(&c))?;
    table.rows.first().map(|r| r[idx].clone())
}
