//! Threshold encryption providers and the simulation backend.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::field;

/// Opaque reference to a ciphertext held by a backend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CiphertextHandle {
    pub id: u64,
    pub tag: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PublicKeyId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShareId(pub u64);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultipartyKeyPair {
    pub pk: PublicKeyId,
    /// Share `i` belongs to party `i`.
    pub shares: Vec<ShareId>,
    pub d: usize,
}

impl MultipartyKeyPair {
    pub fn n(&self) -> usize {
        self.shares.len()
    }
}

/// What the host learns from one equality test.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchOutcome {
    pub is_zero: bool,
    /// Decrypted `(m_i − m_j)·r`.
    pub masked: u64,
    /// Anything else the backend chose to expose. Honest backends never set
    /// this.
    pub note: Option<String>,
}

/// Contract between the protocol and a threshold encryption scheme.
pub trait ThresholdBackend: Send + Sync {
    fn name(&self) -> &str;

    fn keygen(&self, n: usize, d: usize) -> Result<MultipartyKeyPair>;

    fn encrypt(&self, pk: PublicKeyId, plaintext: u64) -> Result<CiphertextHandle>;

    /// Decrypts `(c_i − c_j)·Enc(r)` for fresh non-zero `r` with the given
    /// shares.
    fn is_zero_after_sub_mul_random(
        &self,
        kp: &MultipartyKeyPair,
        a: CiphertextHandle,
        b: CiphertextHandle,
        shares: &[ShareId],
    ) -> Result<MatchOutcome>;

    /// Full threshold decryption, for parties checking their own data.
    fn decrypt(&self, kp: &MultipartyKeyPair, c: CiphertextHandle, shares: &[ShareId]) -> Result<u64>;
}

#[derive(Clone, Copy)]
struct Ciphertext {
    a: u64,
    b: u64,
}

struct KeyMaterial {
    a0: u64,
    b0: u64,
    d: usize,
    shares: Vec<ShareId>,
}

#[derive(Clone, Copy)]
struct ShareMaterial {
    pk: PublicKeyId,
    x: u64,
    /// Shamir share of `s`.
    s: u64,
    /// Shamir share of `s²`.
    s2: u64,
}

/// Noise-free LWE-style scheme over GF(2^61 − 1) with Shamir-shared secret
/// key. `Enc(m) = (u·a0, m + u·s·a0)`, decryption `b − s·a`; the masked
/// product is evaluated as a degree-2 ciphertext `(c0, c1, c2)` decrypted
/// with shares of `s` and `s²`.
pub struct SimulatedBgv {
    tag: u32,
    seed: [u8; 32],
    stream: AtomicU64,
    rng: Mutex<ChaCha20Rng>,
    keys: RwLock<HashMap<PublicKeyId, KeyMaterial>>,
    shares: RwLock<HashMap<ShareId, ShareMaterial>>,
    ciphertexts: RwLock<HashMap<u64, Ciphertext>>,
    lagrange: RwLock<HashMap<Vec<u64>, Vec<u64>>>,
}

impl SimulatedBgv {
    pub fn new(seed: u64) -> Self {
        let mut root = ChaCha20Rng::seed_from_u64(seed);
        let mut stream_seed = [0u8; 32];
        root.fill_bytes(&mut stream_seed);
        SimulatedBgv {
            tag: root.next_u32(),
            seed: stream_seed,
            stream: AtomicU64::new(0),
            rng: Mutex::new(root),
            keys: RwLock::default(),
            shares: RwLock::default(),
            ciphertexts: RwLock::default(),
            lagrange: RwLock::default(),
        }
    }

    /// Independent RNG per call so concurrent queries never contend.
    fn fresh_rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::from_seed(self.seed);
        rng.set_stream(self.stream.fetch_add(1, Ordering::Relaxed));
        rng
    }

    fn ciphertext(&self, h: CiphertextHandle) -> Result<Ciphertext> {
        if h.tag != self.tag {
            return Err(Error::Protocol(format!("handle {} belongs to another backend", h.id)));
        }
        self.ciphertexts
            .read()
            .expect("ciphertext store poisoned")
            .get(&h.id)
            .copied()
            .ok_or_else(|| Error::Protocol(format!("unknown ciphertext handle {}", h.id)))
    }

    fn store(&self, c: Ciphertext, rng: &mut impl RngCore) -> CiphertextHandle {
        let mut store = self.ciphertexts.write().expect("ciphertext store poisoned");
        loop {
            let id = rng.next_u64();
            if let std::collections::hash_map::Entry::Vacant(e) = store.entry(id) {
                e.insert(c);
                return CiphertextHandle { id, tag: self.tag };
            }
        }
    }

    fn encrypt_with(&self, pk: PublicKeyId, m: u64, rng: &mut impl RngCore) -> Result<Ciphertext> {
        let keys = self.keys.read().expect("key store poisoned");
        let k = keys
            .get(&pk)
            .ok_or_else(|| Error::Protocol(format!("unknown public key {}", pk.0)))?;
        let u = field::sample_nonzero(rng);
        Ok(Ciphertext {
            a: field::mul(u, k.a0),
            b: field::add(m % field::MODULUS, field::mul(u, k.b0)),
        })
    }

    /// Validated share material and Lagrange weights for a quorum.
    fn quorum(&self, kp: &MultipartyKeyPair, shares: &[ShareId]) -> Result<(Vec<ShareMaterial>, Vec<u64>)> {
        let d = {
            let keys = self.keys.read().expect("key store poisoned");
            let k = keys
                .get(&kp.pk)
                .ok_or_else(|| Error::Protocol(format!("unknown public key {}", kp.pk.0)))?;
            if !shares.iter().all(|s| k.shares.contains(s)) {
                return Err(Error::Protocol("share does not belong to this key".into()));
            }
            k.d
        };
        let mut distinct = shares.to_vec();
        distinct.sort_unstable_by_key(|s| s.0);
        distinct.dedup();
        if distinct.len() < d {
            return Err(Error::ThresholdUnmet {
                needed: d,
                provided: distinct.len(),
            });
        }
        let material: Vec<ShareMaterial> = {
            let store = self.shares.read().expect("share store poisoned");
            distinct[..d].iter().map(|s| store[s]).collect()
        };
        debug_assert!(material.iter().all(|m| m.pk == kp.pk));
        let xs: Vec<u64> = material.iter().map(|m| m.x).collect();
        if let Some(l) = self.lagrange.read().expect("lagrange cache poisoned").get(&xs) {
            return Ok((material, l.clone()));
        }
        let l = field::lagrange_at_zero(&xs);
        self.lagrange
            .write()
            .expect("lagrange cache poisoned")
            .insert(xs, l.clone());
        Ok((material, l))
    }
}

fn shamir(secret: u64, n: usize, d: usize, rng: &mut impl RngCore) -> Vec<u64> {
    let coeffs: Vec<u64> = std::iter::once(secret)
        .chain((1..d).map(|_| field::sample(rng)))
        .collect();
    (1..=n as u64)
        .map(|x| coeffs.iter().rev().fold(0, |acc, &c| field::add(field::mul(acc, x), c)))
        .collect()
}

impl ThresholdBackend for SimulatedBgv {
    fn name(&self) -> &str {
        "simulated"
    }

    fn keygen(&self, n: usize, d: usize) -> Result<MultipartyKeyPair> {
        if d == 0 || d > n {
            return Err(Error::Config(format!("threshold d = {d} must lie in 1..={n}")));
        }
        let mut rng = self.rng.lock().expect("rng poisoned");
        let s = field::sample_nonzero(&mut *rng);
        let a0 = field::sample_nonzero(&mut *rng);
        let pk = PublicKeyId(rng.next_u64());
        let s_shares = shamir(s, n, d, &mut *rng);
        let s2_shares = shamir(field::mul(s, s), n, d, &mut *rng);
        let ids: Vec<ShareId> = (0..n).map(|_| ShareId(rng.next_u64())).collect();
        {
            let mut store = self.shares.write().expect("share store poisoned");
            for (i, id) in ids.iter().enumerate() {
                store.insert(
                    *id,
                    ShareMaterial {
                        pk,
                        x: i as u64 + 1,
                        s: s_shares[i],
                        s2: s2_shares[i],
                    },
                );
            }
        }
        self.keys.write().expect("key store poisoned").insert(
            pk,
            KeyMaterial {
                a0,
                b0: field::mul(s, a0),
                d,
                shares: ids.clone(),
            },
        );
        Ok(MultipartyKeyPair { pk, shares: ids, d })
    }

    fn encrypt(&self, pk: PublicKeyId, plaintext: u64) -> Result<CiphertextHandle> {
        let mut rng = self.fresh_rng();
        let c = self.encrypt_with(pk, plaintext, &mut rng)?;
        Ok(self.store(c, &mut rng))
    }

    fn is_zero_after_sub_mul_random(
        &self,
        kp: &MultipartyKeyPair,
        a: CiphertextHandle,
        b: CiphertextHandle,
        shares: &[ShareId],
    ) -> Result<MatchOutcome> {
        let (material, lambda) = self.quorum(kp, shares)?;
        let (x, y) = (self.ciphertext(a)?, self.ciphertext(b)?);
        let diff = Ciphertext {
            a: field::sub(x.a, y.a),
            b: field::sub(x.b, y.b),
        };
        // party 0 samples the mask and encrypts it
        let mut rng = self.fresh_rng();
        let r = field::sample_nonzero(&mut rng);
        let enc_r = self.encrypt_with(kp.pk, r, &mut rng)?;
        let c0 = field::mul(diff.b, enc_r.b);
        let c1 = field::add(field::mul(diff.a, enc_r.b), field::mul(enc_r.a, diff.b));
        let c2 = field::mul(diff.a, enc_r.a);
        let masked = material.iter().zip(&lambda).fold(c0, |acc, (m, &l)| {
            let partial = field::sub(field::mul(m.s2, c2), field::mul(m.s, c1));
            field::add(acc, field::mul(l, partial))
        });
        Ok(MatchOutcome {
            is_zero: masked == 0,
            masked,
            note: None,
        })
    }

    fn decrypt(&self, kp: &MultipartyKeyPair, c: CiphertextHandle, shares: &[ShareId]) -> Result<u64> {
        let (material, lambda) = self.quorum(kp, shares)?;
        let ct = self.ciphertext(c)?;
        Ok(material.iter().zip(&lambda).fold(ct.b, |acc, (m, &l)| {
            field::sub(acc, field::mul(l, field::mul(m.s, ct.a)))
        }))
    }
}
