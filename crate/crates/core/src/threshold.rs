//! Similarity thresholds as exact rationals.
//!
//! Every ceiling in the join filters and every `sim >= t` test is computed
//! with integer cross-multiplication so that boundary cases such as
//! `t = 0.5` or `t = 7/11` never round the wrong way.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominator used when converting binary floats.
const FLOAT_GRID: u64 = 1_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn ceil_div(num: u128, den: u128) -> u128 {
    num.div_ceil(den)
}

impl Threshold {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num > den {
            return Err(Error::Config(format!(
                "threshold {num}/{den} is not in [0, 1]"
            )));
        }
        let g = gcd(num, den).max(1);
        Ok(Threshold {
            num: num / g,
            den: den / g,
        })
    }

    /// Snaps a float onto a 1e-9 grid, so `0.1_f64` becomes exactly 1/10.
    pub fn from_f64(t: f64) -> Result<Self> {
        if !t.is_finite() || !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("threshold {t} is not in [0, 1]")));
        }
        Self::new((t * FLOAT_GRID as f64).round() as u64, FLOAT_GRID)
    }

    pub fn numerator(self) -> u64 {
        self.num
    }

    pub fn denominator(self) -> u64 {
        self.den
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    /// Errors unless `t` lies in `(0, 1]`, the range the filters are valid for.
    pub fn require_positive(self) -> Result<Self> {
        if self.is_zero() {
            Err(Error::Config(
                "prefix filtering needs a threshold in (0, 1]".into(),
            ))
        } else {
            Ok(self)
        }
    }

    /// `⌈t·n⌉`
    pub fn ceil_mul(self, n: usize) -> usize {
        ceil_div(self.num as u128 * n as u128, self.den as u128) as usize
    }

    /// Probe prefix length `n − ⌈t·n⌉ + 1`.
    pub fn probe_prefix(self, n: usize) -> usize {
        n - self.ceil_mul(n) + 1
    }

    /// Filtering prefix length `⌈(1−t)·n⌉ + 1`.
    pub fn filter_prefix(self, n: usize) -> usize {
        ceil_div((self.den - self.num) as u128 * n as u128, self.den as u128) as usize + 1
    }

    /// Minimal overlap `⌈t/(1+t)·(a+b)⌉` equivalent to `Jaccard >= t`.
    pub fn min_overlap(self, a: usize, b: usize) -> usize {
        ceil_div(
            self.num as u128 * (a + b) as u128,
            (self.num + self.den) as u128,
        ) as usize
    }

    /// `overlap / union >= t`; an empty union only meets `t = 0`.
    pub fn admits(self, overlap: usize, union: usize) -> bool {
        overlap as u128 * self.den as u128 >= self.num as u128 * union as u128
    }

    /// Length filter: `t·longer <= shorter`.
    pub fn length_compatible(self, shorter: usize, longer: usize) -> bool {
        self.admits(shorter, longer)
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if FLOAT_GRID.is_multiple_of(self.den) {
            let mut s = format!("{}", self.as_f64());
            if !s.contains('.') {
                s.push_str(".0");
            }
            f.write_str(&s)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Accepts decimals (`"0.8"`, parsed exactly) and fractions (`"7/11"`).
impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("cannot parse threshold {s:?}"));
        if let Some((n, d)) = s.split_once('/') {
            let n = n.trim().parse().map_err(|_| bad())?;
            let d = d.trim().parse().map_err(|_| bad())?;
            return Self::new(n, d);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 18 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let int: u64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let den = 10u64.pow(frac.len() as u32);
        let frac: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        let num = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(bad)?;
        Self::new(num, den)
    }
}

impl TryFrom<f64> for Threshold {
    type Error = Error;

    fn try_from(t: f64) -> Result<Self> {
        Self::from_f64(t)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.as_f64()
    }
}
