//! PPJoin executed by a semi-honest host over token-granular threshold
//! encryption.
//!
//! Parties tokenize and encrypt locally ([`Party::local_preprocess`]); the
//! host merges encrypted frequency maps ([`doc_freq_join`]), ranks every
//! record token ([`assign_ranks`]) and runs the join ([`he_ppjoin`]). The
//! host's only interactive primitive is [`Session::is_match`], and every
//! call lands in a [`Transcript`] that [`audit_transcript`] can check.

mod audit;
mod backend;
pub mod field;
mod host;
mod party;
mod transcript;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, RecordId, Tokenizer};
use crate::error::{Error, Result};
use crate::pairs::PairSet;
use crate::threshold::Threshold;

pub use audit::{audit_transcript, AuditContext, AuditReport};
pub use backend::{
    CiphertextHandle, MatchOutcome, MultipartyKeyPair, PublicKeyId, ShareId, SimulatedBgv, ThresholdBackend,
};
pub use host::{
    assign_ranks, doc_freq_join, he_jaccard_baseline, he_ppjoin, he_verify, with_prefixes, EncryptedOrdering,
    HeJoinOutput, OrderingEntry, RankedRecord, Session,
};
pub use party::{EncryptedRecord, Party, PartyUpload};
pub use transcript::{Event, EventKind, Phase, QueryCounts, Transcript, TranscriptMode};

/// Settings of a real lattice backend. Parsed and carried along; the
/// simulation backend ignores them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    pub multiplicative_depth: Option<u32>,
    pub plaintext_modulus: Option<u64>,
    pub sigma: Option<f64>,
    pub security_bits: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeConfig {
    /// Shares needed to decrypt; defaults to every party.
    pub threshold: Option<usize>,
    pub seed: u64,
    pub in_flight: usize,
    pub backend: String,
    pub transcript: TranscriptMode,
    pub tokenizer: Tokenizer,
    pub lattice: LatticeParams,
}

impl Default for HeConfig {
    fn default() -> Self {
        HeConfig {
            threshold: None,
            seed: 0,
            in_flight: 1,
            backend: "simulated".into(),
            transcript: TranscriptMode::Full,
            tokenizer: Tokenizer::default(),
            lattice: LatticeParams::default(),
        }
    }
}

pub fn make_backend(name: &str, seed: u64) -> Result<Arc<dyn ThresholdBackend>> {
    match name {
        "simulated" | "sim" => Ok(Arc::new(SimulatedBgv::new(seed))),
        other => Err(Error::Config(format!("unknown backend {other:?}; available: simulated"))),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub local_preprocess: Duration,
    pub global_preprocess: Duration,
}

struct LocalStage {
    parties: Vec<Party>,
    uploads: Vec<PartyUpload>,
    session: Session,
    elapsed: Duration,
}

impl LocalStage {
    /// Key generation and local pre-processing at every party.
    fn run(datasets: Vec<Dataset>, cfg: &HeConfig, backend: Arc<dyn ThresholdBackend>) -> Result<Self> {
        let n = datasets.len();
        if n < 2 {
            return Err(Error::Config(format!("the protocol needs at least two parties, got {n}")));
        }
        let mut seen = HashSet::new();
        for d in &datasets {
            for r in d.records() {
                if !seen.insert(r.record_id) {
                    return Err(Error::DuplicateId(r.record_id));
                }
            }
        }
        let d = cfg.threshold.unwrap_or(n);
        let kp = backend.keygen(n, d)?;
        let parties: Vec<Party> = datasets
            .into_iter()
            .enumerate()
            .map(|(i, ds)| {
                let ds = Dataset::new(i, ds.into_records())?;
                Ok(Party::new(i, kp.shares[i], ds, cfg.tokenizer))
            })
            .collect::<Result<_>>()?;

        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
        let uploads = parties
            .iter()
            .map(|p| p.local_preprocess(backend.as_ref(), kp.pk, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let elapsed = started.elapsed();

        let transcript = Arc::new(Transcript::new(cfg.transcript));
        let quorum = kp.shares.clone();
        let session = Session::new(backend, kp, quorum, transcript, cfg.seed, cfg.in_flight)?;
        Ok(LocalStage {
            parties,
            uploads,
            session,
            elapsed,
        })
    }
}

/// Outcome of [`run_baseline`].
#[derive(Clone, Debug)]
pub struct BaselineRun {
    pub pairs: PairSet,
    pub queries: QueryCounts,
    pub local_preprocess: Duration,
    pub join: Duration,
}

/// The full-comparison baseline on its own: key generation, local
/// pre-processing and a private set intersection for every cross-owner
/// pair, with no global pre-processing.
pub fn run_baseline(datasets: Vec<Dataset>, cfg: &HeConfig, t: Threshold) -> Result<BaselineRun> {
    let backend = make_backend(&cfg.backend, cfg.seed)?;
    let local = LocalStage::run(datasets, cfg, backend)?;
    let records: Vec<EncryptedRecord> = local.uploads.iter().flat_map(|u| u.records.iter().cloned()).collect();
    let started = Instant::now();
    let pairs = he_jaccard_baseline(&local.session, &records, t)?;
    Ok(BaselineRun {
        pairs,
        queries: local.session.transcript().queries(),
        local_preprocess: local.elapsed,
        join: started.elapsed(),
    })
}

/// Parties, host session and the outcome of global pre-processing, ready to
/// join at any threshold.
pub struct Protocol {
    session: Session,
    parties: Vec<Party>,
    uploads: Vec<PartyUpload>,
    ordering: EncryptedOrdering,
    records: Vec<RankedRecord>,
    rank_cache: HashMap<CiphertextHandle, u32>,
    times: PhaseTimes,
}

impl Protocol {
    /// Key generation, local pre-processing at every party and global
    /// pre-processing at the host. Dataset `i` belongs to party `i`.
    pub fn setup(datasets: Vec<Dataset>, cfg: &HeConfig) -> Result<Self> {
        let backend = make_backend(&cfg.backend, cfg.seed)?;
        Self::setup_with_backend(datasets, cfg, backend)
    }

    pub fn setup_with_backend(
        datasets: Vec<Dataset>,
        cfg: &HeConfig,
        backend: Arc<dyn ThresholdBackend>,
    ) -> Result<Self> {
        let local = LocalStage::run(datasets, cfg, backend)?;
        let session = local.session;

        let started = Instant::now();
        let ordering = doc_freq_join(&session, &local.uploads)?;
        let all_records: Vec<EncryptedRecord> =
            local.uploads.iter().flat_map(|u| u.records.iter().cloned()).collect();
        let (records, rank_cache) = assign_ranks(&session, &ordering, &all_records)?;
        let global_preprocess = started.elapsed();

        Ok(Protocol {
            session,
            parties: local.parties,
            uploads: local.uploads,
            ordering,
            records,
            rank_cache,
            times: PhaseTimes {
                local_preprocess: local.elapsed,
                global_preprocess,
            },
        })
    }

    pub fn join(&self, t: Threshold) -> Result<HeJoinOutput> {
        he_ppjoin(&self.session, &with_prefixes(&self.records, t)?, t)
    }

    /// Full private-set-intersection comparison of every cross-owner pair.
    pub fn baseline(&self, t: Threshold) -> Result<PairSet> {
        let records: Vec<EncryptedRecord> = self.uploads.iter().flat_map(|u| u.records.iter().cloned()).collect();
        he_jaccard_baseline(&self.session, &records, t)
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn transcript(&self) -> &Arc<Transcript> {
        self.session.transcript()
    }

    pub fn parties(&self) -> &[Party] {
        &self.parties
    }

    pub fn uploads(&self) -> &[PartyUpload] {
        &self.uploads
    }

    pub fn ordering(&self) -> &EncryptedOrdering {
        &self.ordering
    }

    pub fn records(&self) -> &[RankedRecord] {
        &self.records
    }

    pub fn rank_of(&self, handle: CiphertextHandle) -> Option<u32> {
        self.rank_cache.get(&handle).copied()
    }

    pub fn times(&self) -> PhaseTimes {
        self.times
    }

    /// A session over the same key that decrypts with `quorum` only.
    pub fn session_with_quorum(&self, quorum: Vec<ShareId>, seed: u64) -> Result<Session> {
        Session::new(
            Arc::clone(self.session.backend()),
            self.session.key_pair().clone(),
            quorum,
            Arc::new(Transcript::new(TranscriptMode::Full)),
            seed,
            1,
        )
    }

    /// The global ordering decrypted by the parties: encoded token to
    /// document frequency.
    pub fn decrypt_ordering(&self) -> Result<HashMap<u64, usize>> {
        let kp = self.session.key_pair();
        self.ordering
            .entries
            .iter()
            .map(|e| Ok((self.session.backend().decrypt(kp, e.handle, &kp.shares)?, e.doc_freq)))
            .collect()
    }

    /// Auditor context built from the parties' own plaintexts.
    pub fn audit_context(&self) -> Result<AuditContext> {
        let mut known = HashSet::new();
        for p in &self.parties {
            for set in p.token_sets()? {
                known.extend(set.tokens.iter().map(|t| field::encode_token(t)));
            }
        }
        Ok(AuditContext {
            known_plaintexts: known,
        })
    }

    pub fn audit(&self) -> Result<AuditReport> {
        if self.transcript().mode() != TranscriptMode::Full {
            return Err(Error::Precondition("auditing needs a full transcript".into()));
        }
        audit_transcript(&self.transcript().events(), &self.audit_context()?)
    }

    pub fn owner_of(&self) -> HashMap<RecordId, usize> {
        self.records
            .iter()
            .map(|r| (r.ordered.record_id, r.ordered.owner_id))
            .collect()
    }
}
