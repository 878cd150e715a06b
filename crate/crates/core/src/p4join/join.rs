use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairs::{MatchPair, PairSet};
use crate::ppjoin::{check_sorted_by_len, InvertedIndex, JoinScope, OverlapMap};
use crate::threshold::Threshold;

use super::fingerprint::Fingerprint;

/// Bit positions ranked by ascending set-bit frequency over a corpus, ties
/// broken by position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitOrdering {
    by_rank: Vec<u32>,
    rank_of: Vec<u32>,
}

impl BitOrdering {
    pub fn from_fingerprints(fps: &[Fingerprint], l: usize) -> Self {
        let mut freq = vec![0usize; l];
        for fp in fps {
            for b in fp.bits.ones() {
                freq[b] += 1;
            }
        }
        let mut by_rank: Vec<u32> = (0..l as u32).collect();
        by_rank.sort_by_key(|&b| (freq[b as usize], b));
        let mut rank_of = vec![0u32; l];
        for (rank, &bit) in by_rank.iter().enumerate() {
            rank_of[bit as usize] = rank as u32;
        }
        BitOrdering { by_rank, rank_of }
    }

    pub fn len(&self) -> usize {
        self.by_rank.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_rank.is_empty()
    }

    pub fn rank(&self, bit: usize) -> u32 {
        self.rank_of[bit]
    }

    pub fn bit(&self, rank: u32) -> usize {
        self.by_rank[rank as usize] as usize
    }

    /// Set bits of `fp` as ascending ranks.
    pub fn ranks(&self, fp: &Fingerprint) -> Vec<u32> {
        let mut r: Vec<u32> = fp.bits.ones().map(|b| self.rank_of[b]).collect();
        r.sort_unstable();
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterToggles {
    pub length: bool,
    pub prefix: bool,
    pub position: bool,
}

impl FilterToggles {
    pub const ALL: FilterToggles = FilterToggles {
        length: true,
        prefix: true,
        position: true,
    };
    pub const NONE: FilterToggles = FilterToggles {
        length: false,
        prefix: false,
        position: false,
    };
}

impl Default for FilterToggles {
    fn default() -> Self {
        FilterToggles::ALL
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct P4Counters {
    /// Pairs the join loop looked at, before any filter.
    pub pairs_considered: u64,
    pub owner_skipped: u64,
    pub length_pruned: u64,
    pub position_pruned: u64,
    pub tanimoto_evaluations: u64,
    pub emitted: u64,
}

#[derive(Clone, Debug, Default)]
pub struct P4JoinOutput {
    pub pairs: PairSet,
    pub counters: P4Counters,
}

/// Exact `tanimoto(a, b) >= t`.
pub fn tanimoto_at_least(a: &Fingerprint, b: &Fingerprint, t: Threshold) -> bool {
    let common = a.bits.and_count(&b.bits);
    t.admits(common, a.cardinality + b.cardinality - common)
}

/// Every pair allowed by `scope` with Tanimoto similarity at least `t`.
pub fn full_tanimoto(fps: &[Fingerprint], t: Threshold, scope: JoinScope) -> PairSet {
    let mut out = PairSet::new();
    for (i, x) in fps.iter().enumerate() {
        for y in &fps[i + 1..] {
            if scope == JoinScope::CrossOwner && x.owner_id == y.owner_id {
                continue;
            }
            if tanimoto_at_least(x, y, t) {
                out.insert(MatchPair::new(x.record_id, y.record_id, false));
            }
        }
    }
    out
}

fn check_input(fps: &[Fingerprint]) -> Result<usize> {
    let l = fps.first().map_or(0, Fingerprint::len);
    if let Some(bad) = fps.iter().find(|f| f.len() != l) {
        return Err(Error::Param(format!(
            "fingerprint {} has {} bits, expected {l}",
            bad.record_id,
            bad.len()
        )));
    }
    if let Some(empty) = fps.iter().find(|f| f.cardinality == 0) {
        return Err(Error::EmptyRecord(empty.record_id));
    }
    check_sorted_by_len(fps.iter().map(|f| f.cardinality))?;
    Ok(l)
}

/// Sorts fingerprints into the `(cardinality, owner, id)` order
/// [`p4join`] expects.
pub fn sort_by_cardinality(fps: &mut [Fingerprint]) {
    fps.sort_by_key(|f| (f.cardinality, f.owner_id, f.record_id));
}

/// P4Join over fingerprints sorted by ascending cardinality.
pub fn p4join(
    fps: &[Fingerprint],
    t: Threshold,
    filters: FilterToggles,
    scope: JoinScope,
) -> Result<P4JoinOutput> {
    let t = t.require_positive()?;
    let l = check_input(fps)?;
    if filters.prefix {
        prefix_join(fps, l, t, filters, scope)
    } else {
        bucket_join(fps, t, filters, scope)
    }
}

fn emit(out: &mut P4JoinOutput, x: &Fingerprint, y: &Fingerprint, t: Threshold) {
    out.counters.tanimoto_evaluations += 1;
    if tanimoto_at_least(x, y, t) && out.pairs.insert(MatchPair::new(x.record_id, y.record_id, false)) {
        out.counters.emitted += 1;
    }
}

fn bucket_join(
    fps: &[Fingerprint],
    t: Threshold,
    filters: FilterToggles,
    scope: JoinScope,
) -> Result<P4JoinOutput> {
    let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut out = P4JoinOutput::default();
    for (x_idx, x) in fps.iter().enumerate() {
        let lo = if filters.length { t.ceil_mul(x.cardinality) } else { 0 };
        let mut in_range = 0u64;
        for (_, ys) in buckets.range(lo..) {
            for &y_idx in ys {
                in_range += 1;
                let y = &fps[y_idx];
                if scope == JoinScope::CrossOwner && y.owner_id == x.owner_id {
                    out.counters.owner_skipped += 1;
                    continue;
                }
                emit(&mut out, x, y, t);
            }
        }
        out.counters.pairs_considered += x_idx as u64;
        out.counters.length_pruned += x_idx as u64 - in_range;
        buckets.entry(x.cardinality).or_default().push(x_idx);
    }
    Ok(out)
}

fn prefix_join(
    fps: &[Fingerprint],
    l: usize,
    t: Threshold,
    filters: FilterToggles,
    scope: JoinScope,
) -> Result<P4JoinOutput> {
    let ordering = BitOrdering::from_fingerprints(fps, l);
    let ranks: Vec<Vec<u32>> = fps.iter().map(|f| ordering.ranks(f)).collect();
    let mut index = InvertedIndex::with_ranks(l);
    let mut overlaps = OverlapMap::new(fps.len());
    let mut out = P4JoinOutput::default();

    for (x_idx, x) in fps.iter().enumerate() {
        let card_x = x.cardinality;
        let prefix = t.probe_prefix(card_x);
        for (i, &w) in ranks[x_idx][..prefix].iter().enumerate() {
            let i = i + 1;
            for &(y_idx, j) in index.postings(w) {
                let c = &mut out.counters;
                c.pairs_considered += 1;
                let y_idx = y_idx as usize;
                let y = &fps[y_idx];
                if scope == JoinScope::CrossOwner && y.owner_id == x.owner_id {
                    c.owner_skipped += 1;
                    continue;
                }
                if filters.length && !t.length_compatible(y.cardinality, card_x) {
                    c.length_pruned += 1;
                    continue;
                }
                if filters.position {
                    let alpha = t.min_overlap(card_x, y.cardinality);
                    let ubound = 1 + (card_x - i).min(y.cardinality - j as usize);
                    if overlaps.get(y_idx) as usize + ubound < alpha {
                        c.position_pruned += 1;
                        overlaps.reset(y_idx);
                        continue;
                    }
                }
                overlaps.increment(y_idx);
            }
            index.insert(w, x_idx, i);
        }
        let candidates: Vec<usize> = overlaps.candidates().map(|(y, _)| y).collect();
        for y_idx in candidates {
            emit(&mut out, x, &fps[y_idx], t);
        }
        overlaps.clear();
    }
    Ok(out)
}

/// `k_opt = (l/U)·ln 2` and its rounding, at least 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalK {
    pub exact: f64,
    pub rounded: usize,
}

fn require_positive(name: &str, v: usize) -> Result<f64> {
    if v == 0 {
        return Err(Error::Param(format!("{name} must be at least 1")));
    }
    Ok(v as f64)
}

pub fn optimal_k(l: usize, u: usize) -> Result<OptimalK> {
    let exact = require_positive("l", l)? / require_positive("U", u)? * std::f64::consts::LN_2;
    Ok(OptimalK {
        exact,
        rounded: (exact.round() as usize).max(1),
    })
}

/// Fingerprint length making `k` optimal for `u` tokens, `k·U / ln 2`.
pub fn optimal_length(k: usize, u: usize) -> Result<f64> {
    Ok(require_positive("k", k)? * require_positive("U", u)? / std::f64::consts::LN_2)
}

/// `(1 − e^{−Uk/l})^k`.
pub fn false_positive_rate(u: usize, k: usize, l: usize) -> Result<f64> {
    let (u, k, l) = (
        require_positive("U", u)?,
        require_positive("k", k)?,
        require_positive("l", l)?,
    );
    Ok((1.0 - (-u * k / l).exp()).powf(k))
}
