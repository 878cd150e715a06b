//! Checks that a host transcript stays within the protocol's stated leakage:
//! record lengths, ordering frequencies and equality bits.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dataset::RecordId;
use crate::error::{Error, Result};

use super::backend::CiphertextHandle;
use super::transcript::{Event, EventKind};

/// Facts known to the auditor but not to the host.
#[derive(Clone, Debug, Default)]
pub struct AuditContext {
    /// Encoded plaintext tokens of the corpus.
    pub known_plaintexts: HashSet<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub events: usize,
    pub is_match_queries: usize,
    pub records: usize,
    /// Cross-owner pairs with at least one equality test between them.
    pub pairs_queried: usize,
    /// Largest share of `|x|·|y|` handle pairs tested for a non-emitted pair.
    pub max_unemitted_coverage: f64,
}

type PairKey = (RecordId, RecordId);

fn key(a: RecordId, b: RecordId) -> PairKey {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Returns the report, or every violation found.
pub fn audit_transcript(events: &[Event], ctx: &AuditContext) -> Result<AuditReport> {
    let mut violations = Vec::new();
    let mut report = AuditReport {
        events: events.len(),
        ..Default::default()
    };
    let mut lengths: HashMap<RecordId, (usize, usize)> = HashMap::new();
    let mut owner_of_handle: HashMap<CiphertextHandle, (RecordId, usize)> = HashMap::new();
    let mut arrivals: HashMap<RecordId, usize> = HashMap::new();
    let mut masks: HashSet<u64> = HashSet::new();
    let mut emitted: HashSet<PairKey> = HashSet::new();
    let mut coverage: HashMap<PairKey, HashSet<(CiphertextHandle, CiphertextHandle)>> = HashMap::new();

    for (i, e) in events.iter().enumerate() {
        if e.seq != i as u64 {
            violations.push(format!("event #{i} has sequence number {}", e.seq));
        }
        match &e.kind {
            EventKind::BackendNote { text } => {
                violations.push(format!("event {}: backend exposed {text:?}", e.seq));
            }
            EventKind::RecordLength { record, owner, length } => {
                if lengths.insert(*record, (*owner, *length)).is_some() {
                    violations.push(format!("event {}: length of record {record} logged twice", e.seq));
                }
            }
            EventKind::HandleArrival { handle, record, owner } => {
                *arrivals.entry(*record).or_default() += 1;
                if owner_of_handle.insert(*handle, (*record, *owner)).is_some() {
                    violations.push(format!("event {}: handle {} arrived twice", e.seq, handle.id));
                }
            }
            EventKind::IsMatch { a, b, masked, result, .. } => {
                report.is_match_queries += 1;
                if *result != (*masked == 0) {
                    violations.push(format!("event {}: result disagrees with decrypted value", e.seq));
                }
                if *masked != 0 {
                    if !masks.insert(*masked) {
                        violations.push(format!("event {}: decrypted mismatch value repeats", e.seq));
                    }
                    if ctx.known_plaintexts.contains(masked) {
                        violations.push(format!("event {}: decrypted value is a plaintext token", e.seq));
                    }
                }
                if let (Some(&(ra, oa)), Some(&(rb, ob))) = (owner_of_handle.get(a), owner_of_handle.get(b)) {
                    if oa != ob {
                        let pair = if ra <= rb { (*a, *b) } else { (*b, *a) };
                        coverage.entry(key(ra, rb)).or_default().insert(pair);
                    }
                }
            }
            EventKind::Emit { a, b } => {
                emitted.insert(key(*a, *b));
            }
            EventKind::OrderingArrival { .. } | EventKind::Counter { .. } => {}
        }
    }

    for (record, (_, length)) in &lengths {
        let seen = arrivals.get(record).copied().unwrap_or(0);
        if seen != *length {
            violations.push(format!("record {record}: {seen} handles arrived for length {length}"));
        }
    }
    if let Some(r) = arrivals.keys().find(|r| !lengths.contains_key(r)) {
        violations.push(format!("record {r}: handles arrived without a length"));
    }
    report.records = lengths.len();
    report.pairs_queried = coverage.len();
    for (pair, tested) in &coverage {
        if emitted.contains(pair) {
            continue;
        }
        let full = lengths.get(&pair.0).map_or(0, |l| l.1) * lengths.get(&pair.1).map_or(0, |l| l.1);
        let share = tested.len() as f64 / full.max(1) as f64;
        report.max_unemitted_coverage = report.max_unemitted_coverage.max(share);
        if tested.len() >= full {
            violations.push(format!(
                "records {} and {} were compared on every token pair but not emitted",
                pair.0, pair.1
            ));
        }
    }

    if violations.is_empty() {
        Ok(report)
    } else {
        Err(Error::AuditFailure(violations))
    }
}
