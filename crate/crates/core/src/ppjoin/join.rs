use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairs::{MatchPair, PairSet};
use crate::threshold::Threshold;

use super::{JoinScope, OrderedRecord};

/// Per-probe accumulated prefix overlaps, keyed by record index.
///
/// A value reset to 0 marks a candidate pruned by the position filter.
#[derive(Clone, Debug, Default)]
pub struct OverlapMap {
    counts: Vec<u32>,
    seen: Vec<bool>,
    touched: Vec<usize>,
}

impl OverlapMap {
    pub fn new(records: usize) -> Self {
        OverlapMap {
            counts: vec![0; records],
            seen: vec![false; records],
            touched: Vec::new(),
        }
    }

    pub fn get(&self, idx: usize) -> u32 {
        self.counts[idx]
    }

    pub fn is_touched(&self, idx: usize) -> bool {
        self.seen[idx]
    }

    fn touch(&mut self, idx: usize) {
        if !self.seen[idx] {
            self.seen[idx] = true;
            self.touched.push(idx);
        }
    }

    pub fn increment(&mut self, idx: usize) {
        self.touch(idx);
        self.counts[idx] += 1;
    }

    pub fn reset(&mut self, idx: usize) {
        self.touch(idx);
        self.counts[idx] = 0;
    }

    /// Every record touched since the last clear, in first-touch order.
    pub fn touched(&self) -> &[usize] {
        &self.touched
    }

    /// `(record index, overlap)` for touched records with a positive count.
    pub fn candidates(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.touched
            .iter()
            .map(|&i| (i, self.counts[i]))
            .filter(|&(_, c)| c > 0)
    }

    pub fn clear(&mut self) {
        for &i in &self.touched {
            self.counts[i] = 0;
            self.seen[i] = false;
        }
        self.touched.clear();
    }
}

/// Postings per token rank: `(record index, 1-based position in its prefix)`
/// in insertion order.
#[derive(Clone, Debug, Default)]
pub struct InvertedIndex {
    postings: Vec<Vec<(u32, u32)>>,
}

impl InvertedIndex {
    pub fn with_ranks(ranks: usize) -> Self {
        InvertedIndex {
            postings: vec![Vec::new(); ranks],
        }
    }

    pub fn postings(&self, rank: u32) -> &[(u32, u32)] {
        self.postings.get(rank as usize).map_or(&[], Vec::as_slice)
    }

    pub fn insert(&mut self, rank: u32, record: usize, position: usize) {
        let rank = rank as usize;
        if rank >= self.postings.len() {
            self.postings.resize_with(rank + 1, Vec::new);
        }
        self.postings[rank].push((record as u32, position as u32));
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinCounters {
    /// Index postings scanned while probing.
    pub probes: u64,
    pub owner_skipped: u64,
    pub length_pruned: u64,
    pub position_pruned: u64,
    /// Distinct pairs that reached the overlap map.
    pub candidates: u64,
    /// Pairs handed to verification with a positive overlap.
    pub verified: u64,
    /// Verification candidates dropped by the upper bound before any
    /// suffix intersection.
    pub verify_bound_pruned: u64,
    pub suffix_intersections: u64,
    pub emitted: u64,
}

#[derive(Clone, Debug, Default)]
pub struct JoinOutput {
    pub pairs: PairSet,
    pub counters: JoinCounters,
}

pub(crate) fn check_sorted_by_len(lens: impl Iterator<Item = usize>) -> Result<()> {
    let mut prev = 0;
    for (i, len) in lens.enumerate() {
        if len < prev {
            return Err(Error::Precondition(format!(
                "records must be sorted by ascending length (record #{i} has {len} < {prev})"
            )));
        }
        prev = len;
    }
    Ok(())
}

/// Number of common elements of two ascending slices.
pub fn sorted_intersection(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Suffix slices compared by verification, chosen by which record's last
/// prefix token ranks lower. Indices are 0-based starts into the records.
pub(crate) fn verify_plan(
    last_x: u32,
    last_y: u32,
    len_x: usize,
    len_y: usize,
    prefix_x: usize,
    prefix_y: usize,
    overlap: usize,
) -> (usize, usize, usize) {
    if last_x < last_y {
        (overlap + len_x - prefix_x, prefix_x, overlap)
    } else {
        (overlap + len_y - prefix_y, overlap, prefix_y)
    }
}

/// Verification: extends each positive prefix overlap by intersecting the
/// remaining suffixes and certifies pairs reaching `α`.
pub fn verify(
    x: &OrderedRecord,
    records: &[OrderedRecord],
    overlaps: &OverlapMap,
    t: Threshold,
    counters: &mut JoinCounters,
) -> Vec<MatchPair> {
    let mut out = Vec::new();
    for (y_idx, a_y) in overlaps.candidates() {
        let y = &records[y_idx];
        counters.verified += 1;
        let alpha = t.min_overlap(x.len(), y.len());
        let a_y = a_y as usize;
        let (ubound, x_from, y_from) = verify_plan(
            x.token_ranks[x.probe_prefix - 1],
            y.token_ranks[y.probe_prefix - 1],
            x.len(),
            y.len(),
            x.probe_prefix,
            y.probe_prefix,
            a_y,
        );
        let mut overlap = a_y;
        if ubound >= alpha {
            counters.suffix_intersections += 1;
            overlap += sorted_intersection(
                &x.token_ranks[x_from.min(x.len())..],
                &y.token_ranks[y_from.min(y.len())..],
            );
        } else {
            counters.verify_bound_pruned += 1;
        }
        if overlap >= alpha {
            out.push(MatchPair::certified(x.record_id, y.record_id));
        }
    }
    out
}

/// PPJoin over records sorted by ascending length, all ranked against one
/// global ordering.
pub fn ppjoin(records: &[OrderedRecord], t: Threshold, scope: JoinScope) -> Result<JoinOutput> {
    let t = t.require_positive()?;
    check_sorted_by_len(records.iter().map(OrderedRecord::len))?;

    let ranks = records
        .iter()
        .flat_map(|r| r.token_ranks.last().copied())
        .max()
        .map_or(0, |m| m as usize + 1);
    let mut index = InvertedIndex::with_ranks(ranks);
    let mut overlaps = OverlapMap::new(records.len());
    let mut out = JoinOutput::default();
    let c = &mut out.counters;

    for (x_idx, x) in records.iter().enumerate() {
        if x.probe_prefix == 0 || x.probe_prefix > x.len() {
            return Err(Error::Precondition(format!(
                "record {} has prefix {} outside 1..={}",
                x.record_id,
                x.probe_prefix,
                x.len()
            )));
        }
        for i in 1..=x.probe_prefix {
            let w = x.token_ranks[i - 1];
            for &(y_idx, j) in index.postings(w) {
                c.probes += 1;
                let y = &records[y_idx as usize];
                if scope == JoinScope::CrossOwner && y.owner_id == x.owner_id {
                    c.owner_skipped += 1;
                    continue;
                }
                if !t.length_compatible(y.len(), x.len()) {
                    c.length_pruned += 1;
                    continue;
                }
                let y_idx = y_idx as usize;
                if !overlaps.is_touched(y_idx) {
                    c.candidates += 1;
                }
                let alpha = t.min_overlap(x.len(), y.len());
                let ubound = 1 + (x.len() - i).min(y.len() - j as usize);
                if overlaps.get(y_idx) as usize + ubound >= alpha {
                    overlaps.increment(y_idx);
                } else {
                    c.position_pruned += 1;
                    overlaps.reset(y_idx);
                }
            }
            index.insert(w, x_idx, i);
        }
        for pair in verify(x, records, &overlaps, t, c) {
            c.emitted += 1;
            out.pairs.insert(pair);
        }
        overlaps.clear();
    }
    Ok(out)
}
