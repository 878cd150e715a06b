//! Exact and privacy-preserving set-similarity joins.
//!
//! Three engines share one data model:
//!
//! * [`ppjoin`]: exact PPJoin with length, prefix and position filtering,
//!   plus the brute-force Jaccard comparison used as its oracle.
//! * [`p4join`]: Bloom-style fingerprints compared by Tanimoto similarity,
//!   with the same filters applied on set-bit cardinalities.
//! * [`heproto`]: PPJoin run by a semi-honest host over token-granular
//!   threshold encryption, where the only interactive step is an equality
//!   test on masked ciphertext differences.
//!
//! [`attacks`] makes the known weaknesses of fingerprint encodings
//! executable and [`eval`] ties everything into reproducible experiments.

pub mod attacks;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod heproto;
pub mod p4join;
pub mod pairs;
pub mod ppjoin;
pub mod threshold;

pub use dataset::{Dataset, RawRecord, RecordId, TokenSet, Tokenizer};
pub use error::{Error, Result};
pub use pairs::{MatchPair, PairSet};
pub use threshold::Threshold;
