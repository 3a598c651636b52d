//! Fuzzy lookup of model-produced names against the real table vocabulary.

use serde::{Deserialize, Serialize};

use crate::metrics::levenshtein;

pub const DEFAULT_FUZZY_THRESHOLD: f64 = 0.75;

/// Case-insensitive similarity `1 - lev / max_len` over trimmed strings.
pub fn similarity(a: &str, b: &str) -> f64 {
    let a = a.trim().to_lowercase();
    let b = b.trim().to_lowercase();
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / longest as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyHit {
    pub candidate: String,
    pub similarity: f64,
}

/// Best candidate for `query` if its similarity reaches `threshold`.
///
/// A verbatim candidate always wins. Otherwise ties go to the earliest
/// candidate in input order.
pub fn fuzzy_match<S: AsRef<str>>(query: &str, candidates: &[S], threshold: f64) -> Option<FuzzyHit> {
    if let Some(exact) = candidates.iter().find(|c| c.as_ref() == query) {
        return Some(FuzzyHit {
            candidate: exact.as_ref().to_string(),
            similarity: 1.0,
        });
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let s = similarity(query, c.as_ref());
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    let (i, s) = best?;
    (s >= threshold).then(|| FuzzyHit {
        candidate: candidates[i].as_ref().to_string(),
        similarity: s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const REGIONS: [&str; 2] = ["North America", "International"];

    #[test]
    fn recovers_typo() {
        let hit = fuzzy_match("North Amrica", &REGIONS, DEFAULT_FUZZY_THRESHOLD).unwrap();
        assert_eq!(hit.candidate, "North America");
        assert!((hit.similarity - 12.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn identity_scores_one() {
        let hit = fuzzy_match("North America", &REGIONS, DEFAULT_FUZZY_THRESHOLD).unwrap();
        assert_eq!(hit.similarity, 1.0);
    }

    #[test]
    fn unrelated_query_is_absent() {
        assert_eq!(fuzzy_match("Zebra", &REGIONS, DEFAULT_FUZZY_THRESHOLD), None);
        assert!((similarity("Zebra", "North America") - 2.0 / 13.0).abs() < 1e-12);
        assert!((similarity("Zebra", "International") - 2.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_earliest() {
        let hit = fuzzy_match("abx", &["abc", "abd"], 0.5).unwrap();
        assert_eq!(hit.candidate, "abc");
    }

    #[test]
    fn case_insensitive_match_is_full_similarity() {
        let hit = fuzzy_match("net sales", &["Year", "Net Sales"], 0.75).unwrap();
        assert_eq!(hit.candidate, "Net Sales");
        assert_eq!(hit.similarity, 1.0);
    }
}
