//! Exact PPJoin: global token ordering, prefix/length/position filtering over
//! an inverted index, and suffix verification.

mod brute;
mod join;
mod ordering;

use serde::{Deserialize, Serialize};

use crate::dataset::TokenSet;
use crate::error::Result;
use crate::threshold::Threshold;

pub use brute::{full_compare, full_compare_scoped, jaccard, jaccard_at_least, overlap};
pub use join::{
    ppjoin, sorted_intersection, verify, InvertedIndex, JoinCounters, JoinOutput, OverlapMap,
};
pub(crate) use join::check_sorted_by_len;
pub(crate) use join::verify_plan;
pub use ordering::{
    build_ordering, document_frequencies, order_record, prepare_records, GlobalOrdering,
    OrderEntry, OrderedRecord,
};

/// Which record pairs a join may emit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinScope {
    /// Any two records (plain PPJoin).
    #[default]
    AllPairs,
    /// Only records held by different owners.
    CrossOwner,
}

/// Minimal overlap `α = ⌈t/(1+t)·(|x|+|y|)⌉`.
pub fn alpha(t: Threshold, len_x: usize, len_y: usize) -> usize {
    t.min_overlap(len_x, len_y)
}

/// Orders `token_sets` against their own corpus ordering and joins them.
pub fn ppjoin_sets(token_sets: &[TokenSet], t: Threshold, scope: JoinScope) -> Result<JoinOutput> {
    let ordering = build_ordering(token_sets)?;
    let records = prepare_records(token_sets, &ordering, t)?;
    ppjoin(&records, t, scope)
}
