//! Arithmetic in GF(p), p = 2^61 − 1.

use sha2::{Digest, Sha256};

pub const MODULUS: u64 = (1 << 61) - 1;

pub fn reduce(x: u128) -> u64 {
    const M: u128 = MODULUS as u128;
    let x = (x & M) + (x >> 61);
    let x = (x & M) + (x >> 61);
    let r = x as u64;
    if r >= MODULUS {
        r - MODULUS
    } else {
        r
    }
}

pub fn add(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= MODULUS {
        s - MODULUS
    } else {
        s
    }
}

pub fn sub(a: u64, b: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + MODULUS - b
    }
}

pub fn neg(a: u64) -> u64 {
    sub(0, a)
}

pub fn mul(a: u64, b: u64) -> u64 {
    reduce(a as u128 * b as u128)
}

pub fn pow(mut base: u64, mut e: u64) -> u64 {
    let mut acc = 1;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul(acc, base);
        }
        base = mul(base, base);
        e >>= 1;
    }
    acc
}

/// Multiplicative inverse; `a` must be non-zero.
pub fn inv(a: u64) -> u64 {
    debug_assert!(a != 0);
    pow(a, MODULUS - 2)
}

/// Uniform field element from 64 random bits (rejection sampling).
pub fn sample(rng: &mut impl rand::RngCore) -> u64 {
    loop {
        let v = rng.next_u64() >> 3;
        if v < MODULUS {
            return v;
        }
    }
}

pub fn sample_nonzero(rng: &mut impl rand::RngCore) -> u64 {
    loop {
        let v = sample(rng);
        if v != 0 {
            return v;
        }
    }
}

/// Injective for tokens of at most 7 bytes (length-tagged packing), hashed
/// otherwise.
pub fn encode_token(token: &str) -> u64 {
    let bytes = token.as_bytes();
    if bytes.len() <= 7 {
        let packed = bytes.iter().fold(0u64, |acc, &b| (acc << 8) | b as u64);
        ((bytes.len() as u64) << 56) | packed
    } else {
        let d = Sha256::digest(bytes);
        let mut w = [0u8; 8];
        w.copy_from_slice(&d[..8]);
        reduce(u64::from_be_bytes(w) as u128)
    }
}

/// Lagrange coefficients at 0 for the distinct non-zero points `xs`.
pub fn lagrange_at_zero(xs: &[u64]) -> Vec<u64> {
    xs.iter()
        .enumerate()
        .map(|(j, &xj)| {
            let (mut num, mut den) = (1, 1);
            for (m, &xm) in xs.iter().enumerate() {
                if m != j {
                    num = mul(num, xm);
                    den = mul(den, sub(xm, xj));
                }
            }
            mul(num, inv(den))
        })
        .collect()
}
