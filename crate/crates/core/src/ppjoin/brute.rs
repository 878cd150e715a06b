//! Full pairwise comparison, the correctness oracle for every filtered join.

use std::collections::HashSet;

use crate::dataset::TokenSet;
use crate::error::{Error, Result};
use crate::pairs::{MatchPair, PairSet};
use crate::threshold::Threshold;

use super::JoinScope;

pub fn overlap(x: &TokenSet, y: &TokenSet) -> usize {
    let ys: HashSet<&str> = y.tokens.iter().map(String::as_str).collect();
    x.tokens.iter().filter(|t| ys.contains(t.as_str())).count()
}

/// `|x ∩ y| / |x ∪ y|`.
pub fn jaccard(x: &TokenSet, y: &TokenSet) -> f64 {
    let common = overlap(x, y);
    let union = x.len() + y.len() - common;
    if union == 0 {
        return 1.0;
    }
    common as f64 / union as f64
}

/// Exact `Jaccard(x, y) >= t`.
pub fn jaccard_at_least(x: &TokenSet, y: &TokenSet, t: Threshold) -> bool {
    let common = overlap(x, y);
    t.admits(common, x.len() + y.len() - common)
}

/// Every pair of `sets` allowed by `scope` whose Jaccard reaches `t`.
pub fn full_compare_scoped(sets: &[TokenSet], t: Threshold, scope: JoinScope) -> PairSet {
    let mut out = PairSet::new();
    for (i, x) in sets.iter().enumerate() {
        for y in &sets[i + 1..] {
            if scope == JoinScope::CrossOwner && x.owner_id == y.owner_id {
                continue;
            }
            if jaccard_at_least(x, y, t) {
                out.insert(MatchPair::certified(x.record_id, y.record_id));
            }
        }
    }
    out
}

/// All cross-dataset pairs with `Jaccard >= t`.
pub fn full_compare(datasets: &[Vec<TokenSet>], t: Threshold) -> Result<PairSet> {
    if datasets.len() < 2 {
        return Err(Error::Precondition(
            "full comparison needs at least two datasets".into(),
        ));
    }
    let mut out = PairSet::new();
    for (k, dk) in datasets.iter().enumerate() {
        for dl in &datasets[k + 1..] {
            for x in dk {
                for y in dl {
                    if jaccard_at_least(x, y, t) {
                        out.insert(MatchPair::certified(x.record_id, y.record_id));
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RecordId;

    fn set(id: u64, owner: usize, tokens: &[&str]) -> TokenSet {
        TokenSet {
            record_id: RecordId(id),
            owner_id: owner,
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// The two bi-gram sets of the running "tony stark" example.
    pub(crate) fn r12_r21() -> (TokenSet, TokenSet) {
        (
            set(12, 0, &["on", "ar", "ny", "y-", "rk", "ta", "st", "to", "-s"]),
            set(21, 1, &["ar", "on", "to", "ny", "y-", "rk", "ta", "$t", "-$"]),
        )
    }

    #[test]
    fn running_example_scores_seven_elevenths() {
        let (x, y) = r12_r21();
        assert_eq!(overlap(&x, &y), 7);
        assert!((jaccard(&x, &y) - 7.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn identity_and_disjoint() {
        let (x, _) = r12_r21();
        assert_eq!(jaccard(&x, &x), 1.0);
        assert_eq!(jaccard(&x, &set(1, 0, &["zz", "qq"])), 0.0);
    }

    #[test]
    fn boundary_at_seven_elevenths() {
        let (x, y) = r12_r21();
        let parts = vec![vec![x], vec![y]];
        assert_eq!(full_compare(&parts, "7/11".parse().unwrap()).unwrap().len(), 1);
        let above = Threshold::new(7_000_001, 11_000_000).unwrap();
        assert!(full_compare(&parts, above).unwrap().is_empty());
    }

    #[test]
    fn zero_threshold_returns_every_cross_pair() {
        let a = vec![set(0, 0, &["a"]), set(1, 0, &["b"])];
        let b = vec![set(2, 1, &["c"]), set(3, 1, &["d"]), set(4, 1, &["a"])];
        let all = full_compare(&[a, b], Threshold::new(0, 1).unwrap()).unwrap();
        assert_eq!(all.len(), 6);
    }

    #[test]
    fn needs_two_datasets() {
        assert!(full_compare(&[vec![set(0, 0, &["a"])]], "0.5".parse().unwrap()).is_err());
    }

    #[test]
    fn scoped_comparison_skips_same_owner() {
        let sets = vec![set(0, 0, &["a"]), set(1, 0, &["a"]), set(2, 1, &["a"])];
        let t = "0.9".parse().unwrap();
        assert_eq!(full_compare_scoped(&sets, t, JoinScope::AllPairs).len(), 3);
        assert_eq!(full_compare_scoped(&sets, t, JoinScope::CrossOwner).len(), 2);
    }
}
