//! The to_number vector file is shared with the executor; both the Rust
//! coercion and the Python helper shipped to generated code must agree
//! with it.

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::Deserialize;
use tabqa_core::helpers::{helper_library, to_number};

#[derive(Deserialize)]
struct Vector {
    input: String,
    expected: Option<String>,
}

#[derive(Deserialize)]
struct VectorFile {
    vectors: Vec<Vector>,
}

fn vectors_path() -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "testdata", "to_number_vectors.json"].iter().collect()
}

fn load() -> VectorFile {
    serde_json::from_str(&std::fs::read_to_string(vectors_path()).unwrap()).unwrap()
}

#[test]
fn rust_matches_vectors() {
    let file = load();
    assert!(file.vectors.len() >= 30);
    for v in &file.vectors {
        let expected = v.expected.as_deref().map(|e| Decimal::from_str(e).unwrap());
        assert_eq!(to_number(&v.input), expected, "{:?}", v.input);
    }
}

fn run_python(script: &str) -> Option<std::process::Output> {
    let mut child = Command::new("python3")
        .arg("-")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .ok()?;
    child.stdin.take().unwrap().write_all(script.as_bytes()).unwrap();
    Some(child.wait_with_output().unwrap())
}

#[test]
fn python_helper_matches_vectors() {
    let script = format!(
        r#"
import json
from decimal import Decimal
{helpers}
vectors = json.load(open({path:?}, encoding="utf-8"))["vectors"]
bad = []
for v in vectors:
    got = to_number(v["input"])
    want = v["expected"]
    ok = (got is None) if want is None else (got is not None and Decimal(str(got)) == Decimal(want))
    if not ok:
        bad.append((v["input"], got, want))
print(json.dumps(bad))
"#,
        helpers = helper_library().module_source(),
        path = vectors_path().display().to_string(),
    );
    let Some(out) = run_python(&script) else {
        eprintln!("python3 not found; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "[]");
}

#[test]
fn python_fuzzy_helpers_agree_with_rust_mirror() {
    let script = format!(
        r#"
import io, json
try:
    import pandas as pd
except ImportError:
    print("SKIP"); raise SystemExit(0)
{helpers}
df = pd.read_csv(io.StringIO({csv:?}), dtype=str, keep_default_na=False)
for col in df.columns:
    vals = [v for v in df[col] if v.strip() != ""]
    if vals and all(to_number(v) is not None for v in vals):
        df[col] = [to_number(v) for v in df[col]]
na = fuzzy_filter_equals(df, "region", "North Amrica")
row = fuzzy_filter_equals(na, "Year", 2013)
print(json.dumps([fuzzy_lookup_column(df, "net sales"), fuzzy_lookup_column(df, "Profit"), len(na), str(first_value(row, "Net Sales")), len(fuzzy_filter_equals(df, "Year", "2014"))]))
"#,
        helpers = helper_library().module_source(),
        csv = tabqa_core::fixtures::TABLE1_CSV,
    );
    let Some(out) = run_python(&script) else {
        eprintln!("python3 not found; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    if stdout.trim() == "SKIP" {
        eprintln!("pandas not installed; skipping");
        return;
    }
    assert_eq!(stdout.trim(), r#"["Net Sales", null, 3, "44517", 0]"#);
}
