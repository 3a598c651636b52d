//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p tabqa-core --test acceptance`.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;
use tabqa_core::codegen::{run_loop, LoopOptions};
use tabqa_core::executor::{ErrorCategory, ScriptedExecutor, ScriptedOutcome, ScriptedOutcomes};
use tabqa_core::fixtures;
use tabqa_core::fuzzy::fuzzy_match;
use tabqa_core::gateway::{FnBackend, Gateway, ModelRoute, RetryPolicy, TemplateId};
use tabqa_core::harness::demo::write_demo;
use tabqa_core::harness::{load_manifest, run_eval, run_one, RunConfig, Runtime};
use tabqa_core::metrics::{anls, levenshtein, score};
use tabqa_core::reasoning::{parse_reasoning, reconcile, Filter, ReasoningTrace};
use tabqa_core::table::{parse_csv, serialize_csv, CellKind, TableDocument};

const ANLS_TOLERANCE: f64 = 1e-4;
const GOLDEN_BUDGET: Duration = Duration::from_secs(1);
const FUZZY_THRESHOLD: f64 = 0.75;
const SEED: u64 = 0x7AB1E;

type Verdict = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// 1. Golden end-to-end run ---------------------------------------------------

fn golden() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let layout = write_demo(dir.path()).map_err(|e| e.to_string())?;
    let mut runtime = Runtime::from_config(RunConfig::load(&layout.config).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    runtime.executor = Arc::new(ScriptedExecutor::always(ScriptedOutcome::success("44517")));
    let instance = load_manifest(&layout.manifest)
        .map_err(|e| e.to_string())?
        .into_iter()
        .find(|i| i.question == fixtures::QUESTION)
        .ok_or("worked example missing from manifest")?;
    let start = Instant::now();
    let (bundle, path) = run_one(&runtime, &instance).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(path.is_file(), "bundle not written")?;
    ensure(bundle.answer.as_deref() == Some("44517"), format!("answer {:?}", bundle.answer))?;
    let s = bundle.scores.ok_or("no scores")?;
    ensure(s.exact == 0, format!("exact {}", s.exact))?;
    ensure(s.relieved == 1, format!("relieved {}", s.relieved))?;
    ensure((s.anls - 0.7143).abs() <= ANLS_TOLERANCE, format!("anls {}", s.anls))?;
    ensure(elapsed < GOLDEN_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!(
        "answer=44517 exact=0 relieved=1 anls={:.4} (0.7143±{ANLS_TOLERANCE}) in {} ms (< {} ms)",
        s.anls,
        elapsed.as_millis(),
        GOLDEN_BUDGET.as_millis()
    ))
}

// 2. Retry-loop contract -----------------------------------------------------

const FAILING: &str = "def parse_dataframe(df):\n    return df['Sales']\n";
const PASSING: &str = "def parse_dataframe(df):\n    return str(df['Net Sales'].iloc[4])\n";

fn sequenced(responses: Vec<&'static str>) -> ModelRoute {
    let n = AtomicUsize::new(0);
    let backend = FnBackend::new(move |_| {
        let i = n.fetch_add(1, Ordering::SeqCst).min(responses.len() - 1);
        Ok(format!("```python\n{}```", responses[i]))
    });
    ModelRoute::new(Arc::new(backend), "coder")
}

fn retry_loop() -> Verdict {
    let table = parse_csv(fixtures::TABLE1_CSV).map_err(|e| e.to_string())?;
    let trace = parse_reasoning(fixtures::REASONING_RESPONSE).map_err(|e| e.to_string())?;
    let mut outcomes = ScriptedOutcomes::default();
    outcomes.insert(FAILING, ScriptedOutcome::failure(ErrorCategory::Runtime, "KeyError: 'Sales'"));
    outcomes.insert(PASSING, ScriptedOutcome::success("44517"));
    let run = |responses: Vec<&'static str>| {
        let gw = Gateway::new(RetryPolicy::immediate(0));
        let mut exec = ScriptedExecutor::new(outcomes.clone());
        let r = run_loop(&gw, &sequenced(responses), &table, fixtures::QUESTION, &trace, &mut exec, &LoopOptions::default())
            .map_err(|e| e.to_string());
        r.map(|l| (l, gw.calls_for(TemplateId::Codegen) + gw.calls_for(TemplateId::CodegenRetry)))
    };

    let (l, _) = run(vec![FAILING, PASSING])?;
    ensure(
        l.attempts.len() == 2 && !l.exhausted && l.answer.as_deref() == Some("44517"),
        format!("fail-then-succeed: {} attempts, exhausted={}", l.attempts.len(), l.exhausted),
    )?;
    let (l, _) = run(vec![FAILING])?;
    ensure(
        l.attempts.len() == 3 && l.exhausted && l.answer.is_none(),
        format!("always-fail: {} attempts, exhausted={}", l.attempts.len(), l.exhausted),
    )?;
    let (l, calls) = run(vec![PASSING])?;
    ensure(
        l.attempts.len() == 1 && calls == 1,
        format!("immediate success: {} attempts, {calls} codegen calls", l.attempts.len()),
    )?;
    Ok("fail-then-succeed=2 attempts; always-fail=3 attempts, exhausted; immediate=1 attempt, 1 codegen call".into())
}

// 3. Metric oracles ----------------------------------------------------------

/// Unit-cost edit distance by its recursive definition, memoized.
fn oracle_levenshtein(a: &[char], b: &[char]) -> usize {
    fn go(a: &[char], b: &[char], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = (go(a, b, i + 1, j, memo) + 1)
            .min(go(a, b, i, j + 1, memo) + 1)
            .min(go(a, b, i + 1, j + 1, memo) + usize::from(a[i] != b[j]));
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

fn random_string(rng: &mut StdRng, alphabet: &[char], max_len: usize) -> String {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

/// Values from an independent brute-force implementation.
const ANLS_FIXTURE: [(&str, &[&str], f64); 20] = [
    ("44517", &["$44,517"], 0.7142857142857143),
    ("North America", &["North America"], 1.0),
    ("zzzz", &["International"], 0.0),
    ("north america", &["North America "], 1.0),
    ("", &[""], 1.0),
    ("", &["abc"], 0.0),
    ("abc", &[""], 0.0),
    ("Norway", &["Norwey"], 0.8333333333333334),
    ("2013", &["2012", "2013"], 1.0),
    ("True", &["true"], 1.0),
    ("false", &["true"], 0.0),
    ("12.5", &["12.50"], 0.8),
    ("kitten", &["sitting"], 0.5714285714285714),
    ("flaw", &["lawn"], 0.0),
    ("apple", &["apples", "maple"], 0.8333333333333334),
    ("44,517", &["$44,517"], 0.8571428571428572),
    ("International", &["Internatonal"], 0.9230769230769231),
    ("abcd", &["abef"], 0.0),
    ("abcdef", &["abcxyz"], 0.0),
    ("1", &["10", "100"], 0.0),
];

fn metric_oracles() -> Verdict {
    let mut rng = StdRng::seed_from_u64(SEED);
    let small: Vec<char> = "abcd".chars().collect();
    let wide: Vec<char> = "aAbB1 ,$%éß€".chars().collect();
    for i in 0..1000 {
        let alphabet = if i % 2 == 0 { &small } else { &wide };
        let a = random_string(&mut rng, alphabet, 12);
        let b = random_string(&mut rng, alphabet, 12);
        let want = oracle_levenshtein(&a.chars().collect::<Vec<_>>(), &b.chars().collect::<Vec<_>>());
        ensure(levenshtein(&a, &b) == want, format!("levenshtein({a:?}, {b:?}) != {want}"))?;
    }
    for (p, gts, want) in ANLS_FIXTURE {
        let gts: Vec<String> = gts.iter().map(|g| g.to_string()).collect();
        let got = anls(p, &gts, 0.5);
        ensure((got - want).abs() < 1e-12, format!("anls({p:?}, {gts:?}) = {got}, want {want}"))?;
    }
    let pieces = ["$", "44", ",", "517", " ", "%", "True", "yes", "\"", ".0", "+", "A", "b"];
    for _ in 0..1000 {
        let gen = |rng: &mut StdRng| -> String {
            (0..rng.gen_range(0..5)).map(|_| pieces[rng.gen_range(0..pieces.len())]).collect()
        };
        let p = gen(&mut rng);
        let g = gen(&mut rng);
        let s = score("x", Some(&p), &[g.clone()], 0.5);
        ensure(s.exact <= s.relieved, format!("exact > relieved for {p:?} vs {g:?}"))?;
    }
    Ok("levenshtein = recursive oracle on 1000 pairs (len ≤ 12); anls = 20-pair fixture (±1e-12); exact ≤ relieved on 1000 pairs".into())
}

// 4. Table round trip --------------------------------------------------------

fn random_table(rng: &mut StdRng) -> TableDocument {
    let cols = rng.gen_range(1..=7);
    let rows = rng.gen_range(0..=12);
    let header_chars: Vec<char> = "abcXYZ%()# 19".chars().collect();
    let cell_chars: Vec<char> = "ab Z09,.$€%\"\n\r-".chars().collect();
    let mut headers: Vec<String> = Vec::new();
    while headers.len() < cols {
        let h = format!("h{}{}", headers.len(), random_string(rng, &header_chars, 6).trim_end());
        headers.push(h);
    }
    let body: Vec<Vec<String>> = (0..rows)
        .map(|_| (0..cols).map(|_| random_string(rng, &cell_chars, 8)).collect())
        .collect();
    TableDocument::from_raw(&headers, &body)
}

fn table_round_trip() -> Verdict {
    let mut rng = StdRng::seed_from_u64(SEED + 1);
    for i in 0..500 {
        let t = random_table(&mut rng);
        let text = serialize_csv(&t);
        let back = parse_csv(&text).map_err(|e| format!("table {i}: {e}\n{text}"))?;
        ensure(back.repair_notes.is_empty(), format!("table {i}: repair notes {:?}", back.repair_notes))?;
        ensure(back == t, format!("table {i} differs after round trip:\n{text}"))?;
    }
    Ok("500 random tables serialize→parse identically, no repair notes".into())
}

// 5. Fuzzy reconciliation ----------------------------------------------------

fn corruptions(s: &str) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    for i in 0..chars.len() {
        let mut del = chars.clone();
        del.remove(i);
        out.push(del.into_iter().collect());
        for sub in ['x', 'q', '#', ' ', '0'] {
            if !chars[i].eq_ignore_ascii_case(&sub) {
                let mut c = chars.clone();
                c[i] = sub;
                out.push(c.into_iter().collect());
            }
        }
    }
    for i in 0..=chars.len() {
        let mut ins = chars.clone();
        ins.insert(i, 'x');
        out.push(ins.into_iter().collect());
    }
    out
}

fn fuzzy_reconciliation() -> Verdict {
    let table = parse_csv(fixtures::TABLE1_CSV).map_err(|e| e.to_string())?;
    let mut checked = 0;
    let mut check_all = |originals: &[String], candidates: &[String]| -> Result<(), String> {
        for original in originals {
            for corrupted in corruptions(original) {
                let hit = fuzzy_match(&corrupted, candidates, FUZZY_THRESHOLD)
                    .ok_or_else(|| format!("{corrupted:?} matched nothing"))?;
                ensure(
                    &hit.candidate == original && hit.similarity >= FUZZY_THRESHOLD,
                    format!("{corrupted:?} -> {:?} ({})", hit.candidate, hit.similarity),
                )?;
                checked += 1;
            }
        }
        Ok(())
    };
    check_all(&table.columns, &table.columns)?;
    for idx in 0..table.columns.len() {
        let values = table.distinct_text_values(idx);
        check_all(&values, &values)?;
    }

    let numeric: Vec<(String, String)> = table
        .columns
        .iter()
        .enumerate()
        .filter(|(i, _)| table.column_kind(*i) != CellKind::Text)
        .flat_map(|(i, c)| table.column_cells(i).map(move |cell| (c.clone(), cell.raw.clone())))
        .chain([("Year".to_string(), "2014".to_string()), ("Net Sales".to_string(), "44,518".to_string())])
        .collect();
    let trace = ReasoningTrace {
        steps: vec!["step".into()],
        columns_used: Vec::new(),
        filters: numeric
            .iter()
            .map(|(c, v)| Filter { column: c.clone(), value: v.clone() })
            .collect(),
        raw_response: String::new(),
        reconciliations: Vec::new(),
        unresolved: Vec::new(),
    };
    let out = reconcile(&trace, &table, FUZZY_THRESHOLD);
    ensure(out.filters == trace.filters, "a numeric filter value was altered")?;
    ensure(out.reconciliations.is_empty(), "numeric filters produced reconciliations")?;
    Ok(format!(
        "{checked} single-character corruptions recovered (similarity ≥ {FUZZY_THRESHOLD}); {} numeric filters unchanged",
        trace.filters.len()
    ))
}

// 6. Determinism across parallelism -----------------------------------------

fn strip_volatile(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("timestamps");
            for key in ["latency_ms", "duration_ms"] {
                if map.contains_key(key) {
                    map.insert(key.into(), Value::from(0));
                }
            }
            map.values_mut().for_each(strip_volatile);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_volatile),
        _ => {}
    }
}

fn eval_at(config_path: &Path, parallelism: usize, out: &str) -> Result<std::path::PathBuf, String> {
    let mut config = RunConfig::load(config_path).map_err(|e| e.to_string())?;
    config.parallelism = parallelism;
    config.output_dir = out.into();
    let runtime = Runtime::from_config(config).map_err(|e| e.to_string())?;
    let manifest = config_path.with_file_name("manifest.jsonl");
    let instances = load_manifest(&manifest).map_err(|e| e.to_string())?;
    let outcome = run_eval(&runtime, &instances).map_err(|e| e.to_string())?;
    ensure(outcome.report.overall.count == 4, "report does not cover 4 instances")?;
    Ok(outcome.report_json.parent().unwrap().to_path_buf())
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let layout = write_demo(dir.path()).map_err(|e| e.to_string())?;
    let runs = [
        eval_at(&layout.config, 1, "p1a")?,
        eval_at(&layout.config, 1, "p1b")?,
        eval_at(&layout.config, 4, "p4a")?,
        eval_at(&layout.config, 4, "p4b")?,
    ];
    let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    let reference = read(&runs[0].join("report.json"))?;
    let names: Vec<String> = load_manifest(&layout.manifest)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|i| format!("{}.json", i.id))
        .collect();
    for run in &runs[1..] {
        ensure(read(&run.join("report.json"))? == reference, format!("{} report.json differs", run.display()))?;
        for name in &names {
            let mut a: Value = serde_json::from_slice(&read(&runs[0].join(name))?).map_err(|e| e.to_string())?;
            let mut b: Value = serde_json::from_slice(&read(&run.join(name))?).map_err(|e| e.to_string())?;
            strip_volatile(&mut a);
            strip_volatile(&mut b);
            ensure(a == b, format!("{name} differs between runs"))?;
        }
    }
    Ok("report.json byte-identical and bundles equal modulo timestamps/latencies at parallelism 1 and 4 (4 runs)".into())
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 6] = [
        ("golden end-to-end", golden),
        ("retry-loop contract", retry_loop),
        ("metric oracles", metric_oracles),
        ("table round trip", table_round_trip),
        ("fuzzy reconciliation", fuzzy_reconciliation),
        ("determinism", determinism),
    ];
    let mut stdout = std::io::stdout().lock();
    let mut failures = 0;
    for (name, run) in criteria {
        let verdict = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match verdict {
            Ok(detail) => writeln!(stdout, "PASS  {name}: {detail}").unwrap(),
            Err(detail) => {
                failures += 1;
                writeln!(stdout, "FAIL  {name}: {detail}").unwrap();
            }
        }
    }
    writeln!(stdout, "acceptance: {}/6 criteria passed", 6 - failures).unwrap();
    if failures > 0 {
        std::process::exit(1);
    }
}
