use proptest::prelude::*;

use tabqa_core::fixtures;
use tabqa_core::fuzzy::{fuzzy_match, similarity};
use tabqa_core::metrics::{anls, levenshtein, normalize_relieved, score};
use tabqa_core::reasoning::{reconcile, Filter, ReasoningTrace};
use tabqa_core::table::{coerce_cell, parse_csv, serialize_csv, TableDocument};

fn cell() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z ,\"\n]{0,8}",
        "[$€£]?[0-9]{1,3}(,[0-9]{3}){0,2}(\\.[0-9]{1,2})?",
        "[0-9]{1,3}%",
        "\\PC{0,6}",
    ]
}

fn table() -> impl Strategy<Value = TableDocument> {
    (1usize..6, 0usize..6).prop_flat_map(|(cols, rows)| {
        (
            proptest::collection::btree_set("[A-Za-z][A-Za-z0-9 %]{0,8}", cols..=cols),
            proptest::collection::vec(proptest::collection::vec(cell(), cols..=cols), rows..=rows),
        )
            .prop_map(|(headers, rows)| {
                let headers: Vec<String> = headers.into_iter().collect();
                TableDocument::from_raw(&headers, &rows)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn table_round_trip(t in table()) {
        // header cells are never blank and rows never consist of one blank cell
        prop_assume!(t.columns.iter().all(|c| c.trim() == c));
        let back = parse_csv(&serialize_csv(&t)).unwrap();
        prop_assert!(back.repair_notes.is_empty());
        prop_assert_eq!(back, t);
    }

    #[test]
    fn coercion_idempotent(s in "\\PC{0,12}") {
        let once = coerce_cell(&s);
        prop_assert_eq!(coerce_cell(&once.raw), once.clone());
        prop_assert_eq!(once.numeric.is_some(), once.kind.is_numeric());
    }

    #[test]
    fn relieved_normalization_idempotent(s in "\\PC{0,16}") {
        let n = normalize_relieved(&s);
        prop_assert_eq!(normalize_relieved(&n), n);
    }

    #[test]
    fn exact_never_exceeds_relieved(p in "\\PC{0,10}", g in "\\PC{0,10}") {
        let s = score("x", Some(&p), &[g], 0.5);
        prop_assert!(s.exact <= s.relieved);
        let same = score("x", Some(&p), &[format!("  {p} ")], 0.5);
        prop_assert_eq!(same.exact, 1);
        prop_assert_eq!(same.relieved, 1);
    }

    #[test]
    fn anls_bounded_and_symmetric(a in "\\PC{0,10}", b in "\\PC{0,10}") {
        let ab = anls(&a, &[b.clone()], 0.5);
        let ba = anls(&b, &[a.clone()], 0.5);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn anls_one_after_case_and_trim(a in "[A-Za-z0-9 ]{1,10}") {
        let variant = format!(" {} ", a.to_uppercase());
        prop_assert_eq!(anls(&a, &[variant.clone()], 0.5), 1.0);
        prop_assert_eq!(score("x", Some(&a), &[variant], 0.5).relieved, 1);
    }

    #[test]
    fn levenshtein_triangle(a in "[abc]{0,8}", b in "[abc]{0,8}", c in "[abc]{0,8}") {
        prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
    }

    #[test]
    fn fuzzy_match_returns_a_candidate(q in "[a-z ]{0,8}", cands in proptest::collection::vec("[a-zA-Z ]{0,8}", 0..6)) {
        if let Some(hit) = fuzzy_match(&q, &cands, 0.75) {
            prop_assert!(cands.contains(&hit.candidate));
            prop_assert!(hit.similarity >= 0.75);
            prop_assert_eq!(hit.similarity, similarity(&q, &hit.candidate));
        }
    }

    #[test]
    fn verbatim_candidate_scores_one(q in "[a-zA-Z]{1,8}", mut cands in proptest::collection::vec("[a-zA-Z]{1,8}", 0..5), at in 0usize..5) {
        let pos = at.min(cands.len());
        cands.insert(pos, q.to_uppercase());
        let hit = fuzzy_match(&q, &cands, 0.75).unwrap();
        prop_assert_eq!(hit.similarity, 1.0);
    }

    #[test]
    fn reconcile_idempotent_and_shape_preserving(
        cols in proptest::collection::vec("[A-Za-z %]{1,14}", 0..4),
        filters in proptest::collection::vec(("[A-Za-z ]{1,10}", "[A-Za-z0-9 ]{1,14}"), 0..4),
    ) {
        let table = parse_csv(fixtures::TABLE1_CSV).unwrap();
        let trace = ReasoningTrace {
            steps: vec!["a".into(), "b".into()],
            columns_used: cols,
            filters: filters.into_iter().map(|(column, value)| Filter { column, value }).collect(),
            raw_response: String::new(),
            reconciliations: Vec::new(),
            unresolved: Vec::new(),
        };
        let once = reconcile(&trace, &table, 0.75);
        prop_assert_eq!(once.steps.len(), trace.steps.len());
        prop_assert_eq!(once.columns_used.len(), trace.columns_used.len());
        prop_assert_eq!(once.filters.len(), trace.filters.len());
        prop_assert_eq!(reconcile(&once, &table, 0.75), once);
    }
}
