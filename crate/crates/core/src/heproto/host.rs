//! The computation host: global pre-processing, the join loop and
//! verification, all driven through equality tests on ciphertexts.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::RecordId;
use crate::error::{Error, Result};
use crate::pairs::{MatchPair, PairSet};
use crate::ppjoin::{check_sorted_by_len, verify_plan, InvertedIndex, JoinCounters, OrderedRecord, OverlapMap};
use crate::threshold::Threshold;

use super::backend::{CiphertextHandle, MultipartyKeyPair, ShareId, ThresholdBackend};
use super::party::{EncryptedRecord, PartyUpload};
use super::transcript::{EventKind, Phase, Transcript};

/// Batches at least this large are evaluated on the worker pool.
const PARALLEL_BATCH: usize = 64;

/// The host's handle on the backend plus the parties' decryption quorum.
pub struct Session {
    backend: Arc<dyn ThresholdBackend>,
    kp: MultipartyKeyPair,
    quorum: Vec<ShareId>,
    transcript: Arc<Transcript>,
    rng: Mutex<ChaCha8Rng>,
    pool: Option<rayon::ThreadPool>,
    in_flight: usize,
}

impl Session {
    pub fn new(
        backend: Arc<dyn ThresholdBackend>,
        kp: MultipartyKeyPair,
        quorum: Vec<ShareId>,
        transcript: Arc<Transcript>,
        seed: u64,
        in_flight: usize,
    ) -> Result<Self> {
        if in_flight == 0 {
            return Err(Error::Config("in-flight limit must be at least 1".into()));
        }
        let pool = if in_flight > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(in_flight)
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Session {
            backend,
            kp,
            quorum,
            transcript,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            pool,
            in_flight,
        })
    }

    pub fn key_pair(&self) -> &MultipartyKeyPair {
        &self.kp
    }

    pub fn transcript(&self) -> &Arc<Transcript> {
        &self.transcript
    }

    pub fn backend(&self) -> &Arc<dyn ThresholdBackend> {
        &self.backend
    }

    fn shuffle<T>(&self, items: &mut [T]) {
        items.shuffle(&mut *self.rng.lock().expect("host rng poisoned"));
    }

    fn next_seed(&self) -> u64 {
        self.rng.lock().expect("host rng poisoned").gen()
    }

    /// One interactive equality test, logged with its masked value.
    pub fn is_match(&self, phase: Phase, a: CiphertextHandle, b: CiphertextHandle) -> Result<bool> {
        let out = self
            .backend
            .is_zero_after_sub_mul_random(&self.kp, a, b, &self.quorum)?;
        if let Some(text) = out.note {
            self.transcript.record(EventKind::BackendNote { text });
        }
        self.transcript.record(EventKind::IsMatch {
            phase,
            a,
            b,
            masked: out.masked,
            result: out.is_zero,
        });
        Ok(out.is_zero)
    }

    /// Independent equality tests issued in shuffled order, concurrently
    /// for large batches. Results follow the input order.
    pub fn is_match_batch(&self, phase: Phase, pairs: &[(CiphertextHandle, CiphertextHandle)]) -> Result<Vec<bool>> {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        self.shuffle(&mut order);
        let eval = |&i: &usize| self.is_match(phase, pairs[i].0, pairs[i].1).map(|r| (i, r));
        let answered: Vec<(usize, bool)> = match &self.pool {
            Some(pool) if pairs.len() >= PARALLEL_BATCH => {
                pool.install(|| order.par_iter().map(eval).collect::<Result<_>>())?
            }
            _ => order.iter().map(eval).collect::<Result<_>>()?,
        };
        let mut out = vec![false; pairs.len()];
        for (i, r) in answered {
            out[i] = r;
        }
        Ok(out)
    }

    /// First position in `candidates` matching `h`, scanning in chunks of
    /// the in-flight limit and stopping at the first chunk with a match.
    fn scan(&self, phase: Phase, h: CiphertextHandle, candidates: &[CiphertextHandle]) -> Result<Option<usize>> {
        for (c, chunk) in candidates.chunks(self.in_flight).enumerate() {
            let pairs: Vec<_> = chunk.iter().map(|&o| (h, o)).collect();
            if let Some(p) = self.is_match_batch(phase, &pairs)?.iter().position(|&r| r) {
                return Ok(Some(c * self.in_flight + p));
            }
        }
        Ok(None)
    }

    /// `|x ∩ y|` counted over every handle pair.
    pub fn private_set_intersection(&self, phase: Phase, x: &[CiphertextHandle], y: &[CiphertextHandle]) -> Result<usize> {
        let pairs: Vec<_> = x.iter().flat_map(|&a| y.iter().map(move |&b| (a, b))).collect();
        Ok(self.is_match_batch(phase, &pairs)?.into_iter().filter(|&r| r).count())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingEntry {
    pub handle: CiphertextHandle,
    pub doc_freq: usize,
    pub rank: u32,
}

/// Global document-frequency map with encrypted keys, in rank order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedOrdering {
    pub entries: Vec<OrderingEntry>,
}

impl EncryptedOrdering {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Merges the parties' local maps. Each incoming entry is compared against
/// the entries that existed before its party's turn, in random order;
/// a match adds the local count, otherwise the entry is inserted.
pub fn doc_freq_join(session: &Session, uploads: &[PartyUpload]) -> Result<EncryptedOrdering> {
    struct Slot {
        handle: CiphertextHandle,
        doc_freq: usize,
    }
    let mut global: Vec<Slot> = Vec::new();
    for up in uploads {
        for &(handle, doc_freq) in &up.ordering {
            session.transcript.record(EventKind::OrderingArrival {
                handle,
                owner: up.owner_id,
                doc_freq,
            });
        }
        let mut pool: Vec<usize> = (0..global.len()).collect();
        session.shuffle(&mut pool);
        for &(handle, doc_freq) in &up.ordering {
            let keys: Vec<CiphertextHandle> = pool.iter().map(|&g| global[g].handle).collect();
            match session.scan(Phase::DocFreqJoin, handle, &keys)? {
                Some(p) => {
                    global[pool[p]].doc_freq += doc_freq;
                    pool.remove(p);
                }
                None => global.push(Slot { handle, doc_freq }),
            }
        }
    }
    let mut by_rank: Vec<usize> = (0..global.len()).collect();
    by_rank.sort_by_key(|&i| (global[i].doc_freq, i));
    Ok(EncryptedOrdering {
        entries: by_rank
            .into_iter()
            .enumerate()
            .map(|(rank, i)| OrderingEntry {
                handle: global[i].handle,
                doc_freq: global[i].doc_freq,
                rank: rank as u32,
            })
            .collect(),
    })
}

/// A record rewritten in rank order, with its handles aligned to the ranks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedRecord {
    pub ordered: OrderedRecord,
    pub handles: Vec<CiphertextHandle>,
}

impl RankedRecord {
    pub fn len(&self) -> usize {
        self.handles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.handles.is_empty()
    }
}

/// Rank of every record token, found by scanning the ordering from the most
/// frequent entry down (random order within equal frequencies).
pub fn assign_ranks(
    session: &Session,
    ordering: &EncryptedOrdering,
    records: &[EncryptedRecord],
) -> Result<(Vec<RankedRecord>, HashMap<CiphertextHandle, u32>)> {
    for r in records {
        session.transcript.record(EventKind::RecordLength {
            record: r.record_id,
            owner: r.owner_id,
            length: r.length(),
        });
        for &handle in &r.token_handles {
            session.transcript.record(EventKind::HandleArrival {
                handle,
                record: r.record_id,
                owner: r.owner_id,
            });
        }
    }
    let mut groups: Vec<Vec<OrderingEntry>> = Vec::new();
    for e in ordering.entries.iter().rev() {
        match groups.last_mut() {
            Some(g) if g[0].doc_freq == e.doc_freq => g.push(*e),
            _ => groups.push(vec![*e]),
        }
    }
    let seeds: Vec<u64> = records.iter().map(|_| session.next_seed()).collect();
    let rank_one = |(r, seed): (&EncryptedRecord, u64)| -> Result<Vec<(CiphertextHandle, u32)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scan_order: Vec<OrderingEntry> = Vec::with_capacity(ordering.len());
        for g in &groups {
            let mut g = g.clone();
            g.shuffle(&mut rng);
            scan_order.extend(g);
        }
        r.token_handles
            .iter()
            .map(|&h| {
                // sequential early-exit scan; records run concurrently
                for e in &scan_order {
                    if session.is_match(Phase::RankAssignment, h, e.handle)? {
                        return Ok((h, e.rank));
                    }
                }
                Err(Error::Protocol(format!(
                    "a token of record {} has no entry in the global ordering",
                    r.record_id
                )))
            })
            .collect()
    };
    let jobs: Vec<(&EncryptedRecord, u64)> = records.iter().zip(seeds).collect();
    let ranked: Vec<Vec<(CiphertextHandle, u32)>> = match &session.pool {
        Some(pool) => pool.install(|| jobs.into_par_iter().map(rank_one).collect::<Result<_>>())?,
        None => jobs.into_iter().map(rank_one).collect::<Result<_>>()?,
    };

    let mut cache = HashMap::new();
    let mut out = Vec::with_capacity(records.len());
    for (r, mut pairs) in records.iter().zip(ranked) {
        pairs.sort_unstable_by_key(|&(_, rank)| rank);
        if pairs.windows(2).any(|w| w[0].1 == w[1].1) {
            return Err(Error::Protocol(format!("record {} repeats a token", r.record_id)));
        }
        if pairs.is_empty() {
            return Err(Error::EmptyRecord(r.record_id));
        }
        cache.extend(pairs.iter().copied());
        out.push(RankedRecord {
            ordered: OrderedRecord {
                record_id: r.record_id,
                owner_id: r.owner_id,
                token_ranks: pairs.iter().map(|p| p.1).collect(),
                probe_prefix: 0,
                filter_prefix: 0,
            },
            handles: pairs.iter().map(|p| p.0).collect(),
        });
    }
    out.sort_by_key(|r| (r.len(), r.ordered.owner_id, r.ordered.record_id));
    Ok((out, cache))
}

/// Sets the prefix lengths of every record for threshold `t`.
pub fn with_prefixes(records: &[RankedRecord], t: Threshold) -> Result<Vec<RankedRecord>> {
    let t = t.require_positive()?;
    Ok(records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            let n = r.len();
            r.ordered.probe_prefix = t.probe_prefix(n);
            r.ordered.filter_prefix = t.filter_prefix(n).min(n);
            r
        })
        .collect())
}

#[derive(Clone, Debug, Default)]
pub struct HeJoinOutput {
    pub pairs: PairSet,
    pub counters: JoinCounters,
}

/// Cross-owner PPJoin over ranked records sorted by ascending length, with
/// each probe hit confirmed by an equality test.
pub fn he_ppjoin(session: &Session, records: &[RankedRecord], t: Threshold) -> Result<HeJoinOutput> {
    let t = t.require_positive()?;
    check_sorted_by_len(records.iter().map(RankedRecord::len))?;
    let ranks = records
        .iter()
        .flat_map(|r| r.ordered.token_ranks.last().copied())
        .max()
        .map_or(0, |m| m as usize + 1);
    let mut index = InvertedIndex::with_ranks(ranks);
    let mut overlaps = OverlapMap::new(records.len());
    let mut out = HeJoinOutput::default();

    for (x_idx, xr) in records.iter().enumerate() {
        let x = &xr.ordered;
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
            let c = &mut out.counters;
            let mut hits: Vec<(usize, usize)> = Vec::new();
            for &(y_idx, j) in index.postings(w) {
                c.probes += 1;
                let y = &records[y_idx as usize];
                if y.ordered.owner_id == x.owner_id {
                    c.owner_skipped += 1;
                    continue;
                }
                if !t.length_compatible(y.len(), x.len()) {
                    c.length_pruned += 1;
                    continue;
                }
                hits.push((y_idx as usize, j as usize));
            }
            let queries: Vec<_> = hits
                .iter()
                .map(|&(y_idx, j)| (xr.handles[i - 1], records[y_idx].handles[j - 1]))
                .collect();
            let confirmed = session.is_match_batch(Phase::Probe, &queries)?;
            for (&(y_idx, j), ok) in hits.iter().zip(confirmed) {
                if !ok {
                    return Err(Error::Protocol(format!(
                        "records {} and {} share rank {w} but their tokens differ",
                        x.record_id, records[y_idx].ordered.record_id
                    )));
                }
                let y = &records[y_idx];
                if !overlaps.is_touched(y_idx) {
                    c.candidates += 1;
                }
                let alpha = t.min_overlap(x.len(), y.len());
                let ubound = 1 + (x.len() - i).min(y.len() - j);
                if overlaps.get(y_idx) as usize + ubound >= alpha {
                    overlaps.increment(y_idx);
                } else {
                    c.position_pruned += 1;
                    overlaps.reset(y_idx);
                }
            }
            index.insert(w, x_idx, i);
        }
        for pair in he_verify(session, xr, records, &overlaps, t, &mut out.counters)? {
            out.counters.emitted += 1;
            session.transcript.record(EventKind::Emit { a: pair.a, b: pair.b });
            out.pairs.insert(pair);
        }
        overlaps.clear();
    }
    Ok(out)
}

/// Verification with pivots taken from the cached ranks and the suffix
/// overlap computed by private set intersection.
pub fn he_verify(
    session: &Session,
    xr: &RankedRecord,
    records: &[RankedRecord],
    overlaps: &OverlapMap,
    t: Threshold,
    counters: &mut JoinCounters,
) -> Result<Vec<MatchPair>> {
    let x = &xr.ordered;
    let mut jobs: Vec<(RecordId, usize, usize, std::ops::Range<usize>)> = Vec::new();
    let mut queries = Vec::new();
    for (y_idx, a_y) in overlaps.candidates() {
        let yr = &records[y_idx];
        let y = &yr.ordered;
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
        if ubound < alpha {
            counters.verify_bound_pruned += 1;
            continue;
        }
        counters.suffix_intersections += 1;
        let start = queries.len();
        for &hx in &xr.handles[x_from.min(x.len())..] {
            for &hy in &yr.handles[y_from.min(y.len())..] {
                queries.push((hx, hy));
            }
        }
        jobs.push((y.record_id, a_y, alpha, start..queries.len()));
    }
    let results = session.is_match_batch(Phase::Verify, &queries)?;
    Ok(jobs
        .into_iter()
        .filter(|(_, a_y, alpha, range)| a_y + results[range.clone()].iter().filter(|&&r| r).count() >= *alpha)
        .map(|(y_id, ..)| MatchPair::certified(x.record_id, y_id))
        .collect())
}

/// All cross-owner pairs scored by full private set intersection.
pub fn he_jaccard_baseline(session: &Session, records: &[EncryptedRecord], t: Threshold) -> Result<PairSet> {
    let mut out = PairSet::new();
    for (i, x) in records.iter().enumerate() {
        for y in &records[i + 1..] {
            if x.owner_id == y.owner_id {
                continue;
            }
            let common = session.private_set_intersection(Phase::Baseline, &x.token_handles, &y.token_handles)?;
            if t.admits(common, x.length() + y.length() - common) {
                out.insert(MatchPair::certified(x.record_id, y.record_id));
            }
        }
    }
    Ok(out)
}
