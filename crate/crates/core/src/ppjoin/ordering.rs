use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{RecordId, TokenSet};
use crate::error::{Error, Result};
use crate::threshold::Threshold;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderEntry {
    pub doc_freq: usize,
    pub rank: u32,
}

/// Tokens ranked by ascending document frequency, ties broken
/// lexicographically.
#[derive(Clone, Debug, Default)]
pub struct GlobalOrdering {
    entries: HashMap<String, OrderEntry>,
    by_rank: Vec<String>,
}

impl GlobalOrdering {
    pub fn from_frequencies(freqs: HashMap<String, usize>) -> Self {
        let mut tokens: Vec<(String, usize)> = freqs.into_iter().collect();
        tokens.sort_unstable_by(|(ta, fa), (tb, fb)| fa.cmp(fb).then_with(|| ta.cmp(tb)));
        let mut entries = HashMap::with_capacity(tokens.len());
        let mut by_rank = Vec::with_capacity(tokens.len());
        for (rank, (token, doc_freq)) in tokens.into_iter().enumerate() {
            entries.insert(
                token.clone(),
                OrderEntry {
                    doc_freq,
                    rank: rank as u32,
                },
            );
            by_rank.push(token);
        }
        GlobalOrdering { entries, by_rank }
    }

    pub fn len(&self) -> usize {
        self.by_rank.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_rank.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<OrderEntry> {
        self.entries.get(token).copied()
    }

    pub fn rank(&self, token: &str) -> Result<u32> {
        self.get(token)
            .map(|e| e.rank)
            .ok_or_else(|| Error::OrderingMiss(token.to_string()))
    }

    pub fn token(&self, rank: u32) -> Option<&str> {
        self.by_rank.get(rank as usize).map(String::as_str)
    }

    /// `(token, entry)` in rank order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, OrderEntry)> + '_ {
        self.by_rank.iter().map(|t| (t.as_str(), self.entries[t]))
    }
}

/// Counts, for every token, the number of records containing it.
pub fn document_frequencies<'a>(
    token_sets: impl IntoIterator<Item = &'a TokenSet>,
) -> HashMap<String, usize> {
    let mut freqs: HashMap<String, usize> = HashMap::new();
    for set in token_sets {
        for token in &set.tokens {
            *freqs.entry(token.clone()).or_default() += 1;
        }
    }
    freqs
}

pub fn build_ordering(token_sets: &[TokenSet]) -> Result<GlobalOrdering> {
    if token_sets.is_empty() {
        return Err(Error::Precondition("cannot order an empty corpus".into()));
    }
    Ok(GlobalOrdering::from_frequencies(document_frequencies(token_sets)))
}

/// A record rewritten as ascending token ranks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderedRecord {
    pub record_id: RecordId,
    pub owner_id: usize,
    pub token_ranks: Vec<u32>,
    /// Tokens probed and indexed by the join loop, `|x| − ⌈t·|x|⌉ + 1`.
    pub probe_prefix: usize,
    /// `⌈(1−t)·|x|⌉ + 1`, capped at `|x|`.
    pub filter_prefix: usize,
}

impl OrderedRecord {
    pub fn len(&self) -> usize {
        self.token_ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ranks.is_empty()
    }

    pub fn prefix(&self) -> &[u32] {
        &self.token_ranks[..self.probe_prefix]
    }
}

pub fn order_record(
    token_set: &TokenSet,
    ordering: &GlobalOrdering,
    t: Threshold,
) -> Result<OrderedRecord> {
    let t = t.require_positive()?;
    if token_set.is_empty() {
        return Err(Error::EmptyRecord(token_set.record_id));
    }
    let mut token_ranks = token_set
        .tokens
        .iter()
        .map(|tok| ordering.rank(tok))
        .collect::<Result<Vec<_>>>()?;
    token_ranks.sort_unstable();
    token_ranks.dedup();
    let n = token_ranks.len();
    Ok(OrderedRecord {
        record_id: token_set.record_id,
        owner_id: token_set.owner_id,
        probe_prefix: t.probe_prefix(n),
        filter_prefix: t.filter_prefix(n).min(n),
        token_ranks,
    })
}

/// Orders every record and sorts the result by `(length, owner, id)`, the
/// input order [`ppjoin`](super::ppjoin) expects.
pub fn prepare_records(
    token_sets: &[TokenSet],
    ordering: &GlobalOrdering,
    t: Threshold,
) -> Result<Vec<OrderedRecord>> {
    let mut records = token_sets
        .iter()
        .map(|s| order_record(s, ordering, t))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| (r.len(), r.owner_id, r.record_id));
    Ok(records)
}
