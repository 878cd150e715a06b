use std::fmt;

use hmac::{Hmac, Mac};
use md5::Md5;
use serde::{Deserialize, Serialize};
use sha1::Sha1;

use crate::dataset::{RecordId, TokenSet};
use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintParams {
    pub k: usize,
    pub l: usize,
    pub key_f: Vec<u8>,
    pub key_g: Vec<u8>,
}

impl fmt::Debug for FingerprintParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FingerprintParams")
            .field("k", &self.k)
            .field("l", &self.l)
            .finish_non_exhaustive()
    }
}

/// Reduces a big-endian unsigned integer modulo `m`.
fn digest_mod(digest: &[u8], m: u64) -> u64 {
    digest
        .iter()
        .fold(0u128, |acc, &b| ((acc << 8) | b as u128) % m as u128) as u64
}

impl FingerprintParams {
    pub fn new(k: usize, l: usize, key_f: impl Into<Vec<u8>>, key_g: impl Into<Vec<u8>>) -> Result<Self> {
        let p = FingerprintParams {
            k,
            l,
            key_f: key_f.into(),
            key_g: key_g.into(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.l == 0 {
            return Err(Error::Param(format!("k = {} and l = {} must be positive", self.k, self.l)));
        }
        if self.key_f.is_empty() || self.key_g.is_empty() {
            return Err(Error::Param("HMAC keys must be non-empty".into()));
        }
        Ok(())
    }

    /// Same keys, different shape.
    pub fn with_shape(&self, k: usize, l: usize) -> Result<Self> {
        Self::new(k, l, self.key_f.clone(), self.key_g.clone())
    }

    /// `(HMAC-SHA1(token) mod l, HMAC-MD5(token) mod l)`.
    pub fn base_hashes(&self, token: &str) -> (u64, u64) {
        let mut f = Hmac::<Sha1>::new_from_slice(&self.key_f).expect("HMAC accepts any key length");
        f.update(token.as_bytes());
        let mut g = Hmac::<Md5>::new_from_slice(&self.key_g).expect("HMAC accepts any key length");
        g.update(token.as_bytes());
        let l = self.l as u64;
        (
            digest_mod(&f.finalize().into_bytes(), l),
            digest_mod(&g.finalize().into_bytes(), l),
        )
    }

    /// Bit positions `h_i = (f + i·g) mod l` for `i = 1..=k`; may repeat.
    pub fn positions(&self, token: &str) -> Vec<usize> {
        let (f, g) = self.base_hashes(token);
        let l = self.l as u128;
        (1..=self.k as u128)
            .map(|i| ((f as u128 + i * g as u128) % l) as usize)
            .collect()
    }

    /// Short hex digest identifying the keys without revealing them.
    pub fn key_digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.key_f.len() as u64).to_be_bytes());
        h.update(&self.key_f);
        h.update(&self.key_g);
        hex::encode(&h.finalize()[..8])
    }
}

/// Fixed-length bit array packed into 64-bit words.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitArray {
    len: usize,
    words: Vec<u64>,
}

impl BitArray {
    pub fn zeros(len: usize) -> Self {
        BitArray {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range for {} bits", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn and_count(&self, other: &BitArray) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn is_subset_of(&self, other: &BitArray) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + bit)
            })
        })
    }

    /// Little-endian bytes: bit `i` lives in byte `i / 8` at position `i % 8`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        bytes.truncate(self.len.div_ceil(8));
        bytes
    }

    pub fn from_bytes(len: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::Param(format!(
                "{} bytes cannot hold exactly {len} bits",
                bytes.len()
            )));
        }
        let mut out = BitArray::zeros(len);
        for (i, &b) in bytes.iter().enumerate() {
            out.words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        if out.ones().any(|i| i >= len) {
            return Err(Error::Param("padding bits are set".into()));
        }
        Ok(out)
    }

    pub fn to_vec(&self) -> Vec<u8> {
        (0..self.len).map(|i| self.get(i) as u8).collect()
    }
}

impl fmt::Debug for BitArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitArray({}, {:?})", self.len, self.ones().collect::<Vec<_>>())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fingerprint {
    pub record_id: RecordId,
    pub owner_id: usize,
    pub bits: BitArray,
    pub cardinality: usize,
}

impl Fingerprint {
    pub fn from_bits(record_id: RecordId, owner_id: usize, bits: BitArray) -> Self {
        let cardinality = bits.count_ones();
        Fingerprint {
            record_id,
            owner_id,
            bits,
            cardinality,
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

pub fn encode_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>, params: &FingerprintParams) -> BitArray {
    let mut bits = BitArray::zeros(params.l);
    for token in tokens {
        for pos in params.positions(token) {
            bits.set(pos);
        }
    }
    bits
}

pub fn fingerprint(tokens: &TokenSet, params: &FingerprintParams) -> Fingerprint {
    let bits = encode_tokens(tokens.tokens.iter().map(String::as_str), params);
    Fingerprint::from_bits(tokens.record_id, tokens.owner_id, bits)
}

/// `|a ∧ b| / (|a| + |b| − |a ∧ b|)`.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Param(format!(
            "fingerprint lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let common = a.bits.and_count(&b.bits);
    let union = a.cardinality + b.cardinality - common;
    Ok(if union == 0 { 1.0 } else { common as f64 / union as f64 })
}
