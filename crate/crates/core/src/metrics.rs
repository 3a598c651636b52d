//! Answer scoring: exact match, relieved (normalized) accuracy and ANLS,
//! plus per-subset aggregation into an [`EvalReport`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// ANLS similarity cut-off used by the ICDAR 2019 document VQA challenge.
pub const DEFAULT_ANLS_THRESHOLD: f64 = 0.5;

/// Version tag of the relieved-accuracy normalization chain.
pub const NORMALIZATION_VERSION: &str = "relieved-v1";

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance divided by the longer length; 0 when both are empty.
pub fn normalized_levenshtein(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        0.0
    } else {
        levenshtein(a, b) as f64 / longest as f64
    }
}

/// Average Normalized Levenshtein Similarity of one prediction against its
/// accepted answers: both sides trimmed and lowercased, per-answer score
/// `1 - NL` when `NL < threshold` else 0, maximum over answers.
pub fn anls(prediction: &str, ground_truths: &[String], threshold: f64) -> f64 {
    let p = prediction.trim().to_lowercase();
    ground_truths
        .iter()
        .map(|g| {
            let nl = normalized_levenshtein(&p, &g.trim().to_lowercase());
            if nl < threshold {
                1.0 - nl
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

fn strip_matched_quotes(s: &str) -> &str {
    for q in ['"', '\''] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return &s[1..s.len() - 1];
        }
    }
    s
}

fn remove_thousands_separators(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    for (i, &c) in chars.iter().enumerate() {
        if c == ',' && i > 0 && chars[i - 1].is_ascii_digit() {
            let group = chars.get(i + 1..i + 4);
            let closes = chars.get(i + 4).map_or(true, |n| !n.is_ascii_digit());
            if group.is_some_and(|g| g.iter().all(char::is_ascii_digit)) && closes {
                continue;
            }
        }
        out.push(c);
    }
    out
}

fn canonical_number(s: &str) -> Option<String> {
    let unsigned = s.strip_prefix('+').unwrap_or(s);
    let body = unsigned.strip_prefix('-').unwrap_or(unsigned);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return None;
    }
    match frac {
        Some(f) if f.bytes().all(|b| b == b'0') => {
            Some(unsigned[..unsigned.len() - f.len() - 1].to_string())
        }
        _ => Some(unsigned.to_string()),
    }
}

fn normalize_pass(s: &str) -> String {
    let s = strip_matched_quotes(s.trim()).to_lowercase();
    let s: String = s
        .chars()
        .filter(|c| !crate::table::CURRENCY_SYMBOLS.contains(c))
        .collect();
    let mut s = remove_thousands_separators(&s);
    if s.ends_with('%') {
        s.pop();
    }
    let s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    let s = canonical_number(&s).unwrap_or(s);
    match s.as_str() {
        "yes" | "true" => "true".to_string(),
        "no" | "false" => "false".to_string(),
        _ => s,
    }
}

/// Normalization chain behind relieved accuracy.
///
/// One pass trims, strips matched surrounding quotes, lowercases, drops
/// currency symbols and digit-group commas, strips one trailing `%`,
/// collapses whitespace, canonicalizes plain numbers and maps yes/no onto
/// true/false. Passes repeat until the string stops changing.
pub fn normalize_relieved(s: &str) -> String {
    let mut current = normalize_pass(s);
    // every non-fixpoint pass shortens the string, except the terminal yes/no mapping
    for _ in 0..s.len() + 2 {
        let next = normalize_pass(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstance {
    pub instance_id: String,
    pub prediction: Option<String>,
    pub ground_truths: Vec<String>,
    pub exact: u8,
    pub relieved: u8,
    pub anls: f64,
}

/// Scores one prediction. A missing prediction scores zero everywhere.
pub fn score(
    instance_id: &str,
    prediction: Option<&str>,
    ground_truths: &[String],
    anls_threshold: f64,
) -> ScoredInstance {
    let (exact, relieved, anls_score) = match prediction {
        None => (0, 0, 0.0),
        Some(p) => {
            let trimmed = p.trim();
            let exact = ground_truths.iter().any(|g| g.trim() == trimmed);
            let norm = normalize_relieved(p);
            let relieved = ground_truths.iter().any(|g| normalize_relieved(g) == norm);
            (
                u8::from(exact),
                u8::from(relieved),
                anls(p, ground_truths, anls_threshold),
            )
        }
    };
    ScoredInstance {
        instance_id: instance_id.to_string(),
        prediction: prediction.map(str::to_string),
        ground_truths: ground_truths.to_vec(),
        exact,
        relieved,
        anls: anls_score,
    }
}

/// Benchmark sub-datasets, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subset {
    #[serde(rename = "VWTQ")]
    Vwtq,
    #[serde(rename = "VWTQ-Syn")]
    VwtqSyn,
    #[serde(rename = "VTabFact")]
    VTabFact,
    #[serde(rename = "FinTabNetQA")]
    FinTabNetQa,
    #[serde(rename = "custom")]
    Custom,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Vwtq => "VWTQ",
            Subset::VwtqSyn => "VWTQ-Syn",
            Subset::VTabFact => "VTabFact",
            Subset::FinTabNetQa => "FinTabNetQA",
            Subset::Custom => "custom",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubsetScores {
    pub count: usize,
    /// Percent of instances with a byte-exact (trimmed) match.
    pub exact: f64,
    /// Percent of instances matching after normalization.
    pub relieved: f64,
    /// Mean ANLS in `[0, 1]`.
    pub anls: f64,
}

impl SubsetScores {
    fn from_instances<'a>(items: impl Iterator<Item = &'a ScoredInstance>) -> Self {
        let (mut count, mut exact, mut relieved, mut anls) = (0usize, 0u64, 0u64, 0.0f64);
        for s in items {
            count += 1;
            exact += u64::from(s.exact);
            relieved += u64::from(s.relieved);
            anls += s.anls;
        }
        if count == 0 {
            return Self::default();
        }
        let n = count as f64;
        Self {
            count,
            exact: exact as f64 * 100.0 / n,
            relieved: relieved as f64 * 100.0 / n,
            anls: anls / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub normalization: String,
    pub per_subset: BTreeMap<Subset, SubsetScores>,
    pub overall: SubsetScores,
    pub config_snapshot: serde_json::Value,
}

/// Aggregates scored instances; `overall` is the micro-average over all
/// instances, not the mean of subset means.
pub fn aggregate<F>(
    instances: &[ScoredInstance],
    subset_of: F,
    config_snapshot: serde_json::Value,
) -> EvalReport
where
    F: Fn(&ScoredInstance) -> Subset,
{
    let mut groups: BTreeMap<Subset, Vec<&ScoredInstance>> = BTreeMap::new();
    for s in instances {
        groups.entry(subset_of(s)).or_default().push(s);
    }
    EvalReport {
        normalization: NORMALIZATION_VERSION.to_string(),
        per_subset: groups
            .into_iter()
            .map(|(k, v)| (k, SubsetScores::from_instances(v.into_iter())))
            .collect(),
        overall: SubsetScores::from_instances(instances.iter()),
        config_snapshot,
    }
}

impl EvalReport {
    /// Plain-text table: one column per subset plus the overall average.
    pub fn to_text_table(&self) -> String {
        let mut headers = vec!["Metric".to_string()];
        headers.extend(self.per_subset.keys().map(|s| s.to_string()));
        headers.push("Avg.".to_string());
        let columns: Vec<&SubsetScores> = self
            .per_subset
            .values()
            .chain(std::iter::once(&self.overall))
            .collect();
        let mut rows: Vec<Vec<String>> = vec![headers];
        let metric_rows: [(&str, fn(&SubsetScores) -> String); 4] = [
            ("Count", |s| s.count.to_string()),
            ("Exact %", |s| format!("{:.2}", s.exact)),
            ("Relieved %", |s| format!("{:.2}", s.relieved)),
            ("ANLS", |s| format!("{:.4}", s.anls)),
        ];
        for (label, render) in metric_rows {
            let mut row = vec![label.to_string()];
            row.extend(columns.iter().map(|s| render(s)));
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (n, row) in rows.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if i == 0 {
                        format!("{c:<w$}", w = widths[i])
                    } else {
                        format!("{c:>w$}", w = widths[i])
                    }
                })
                .collect();
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
            if n == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
            }
        }
        out
    }
}
