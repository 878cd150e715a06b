//! Attacks on keyed fingerprint encodings: per-bit sensitivity, enumeration
//! of an enumerable token universe, and deterministic-encoding lookup.

use std::collections::HashMap;
use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{RawRecord, Tokenizer};
use crate::error::{Error, Result};
use crate::p4join::{
    encode_tokens, false_positive_rate, BitArray, Fingerprint, FingerprintHeader, FingerprintParams,
};
use crate::RecordId;

/// Characters the normalizer can emit plus the padding symbol.
pub const DEFAULT_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789_ ";

/// Every bi-gram over [`DEFAULT_ALPHABET`].
pub fn default_universe() -> Vec<String> {
    let chars: Vec<char> = DEFAULT_ALPHABET.chars().collect();
    chars
        .iter()
        .flat_map(|a| chars.iter().map(move |b| format!("{a}{b}")))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitSensitivity {
    pub position: usize,
    /// Universe tokens hashing to this bit.
    pub dist: usize,
    /// Corpus fingerprints with this bit set.
    pub freq: usize,
    /// `1 / min(dist, freq)`, absent when either count is zero.
    pub s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub header: FingerprintHeader,
    pub bits: Vec<BitSensitivity>,
}

impl SensitivityReport {
    /// Bits by descending sensitivity, undefined ones last, ties by position.
    pub fn ranked(&self) -> Vec<BitSensitivity> {
        let mut out = self.bits.clone();
        out.sort_by(|a, b| {
            b.s.unwrap_or(-1.0)
                .total_cmp(&a.s.unwrap_or(-1.0))
                .then(a.position.cmp(&b.position))
        });
        out
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["position", "dist", "freq", "S"])?;
        for b in &self.bits {
            w.write_record([
                b.position.to_string(),
                b.dist.to_string(),
                b.freq.to_string(),
                b.s.map_or_else(String::new, |s| s.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn sensitivity(dist: usize, freq: usize) -> Option<f64> {
    match dist.min(freq) {
        0 => None,
        m => Some(1.0 / m as f64),
    }
}

/// Scores every bit of a fingerprint corpus built under `header`.
pub fn bit_sensitivity(
    corpus: &[Fingerprint],
    header: &FingerprintHeader,
    universe: &[String],
    params: &FingerprintParams,
) -> Result<SensitivityReport> {
    header.check(params)?;
    let mut dist = vec![0usize; params.l];
    let token_bits: Vec<Vec<usize>> = universe.par_iter().map(|t| distinct_positions(params, t)).collect();
    for bits in token_bits {
        for b in bits {
            dist[b] += 1;
        }
    }
    let mut freq = vec![0usize; params.l];
    for fp in corpus {
        if fp.len() != params.l {
            return Err(Error::Param(format!(
                "fingerprint {} has {} bits, header says {}",
                fp.record_id,
                fp.len(),
                params.l
            )));
        }
        for b in fp.bits.ones() {
            freq[b] += 1;
        }
    }
    let bits = (0..params.l)
        .map(|position| BitSensitivity {
            position,
            dist: dist[position],
            freq: freq[position],
            s: sensitivity(dist[position], freq[position]),
        })
        .collect();
    Ok(SensitivityReport {
        header: header.clone(),
        bits,
    })
}

fn distinct_positions(params: &FingerprintParams, token: &str) -> Vec<usize> {
    let mut p = params.positions(token);
    p.sort_unstable();
    p.dedup();
    p
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub record_id: RecordId,
    /// Universe tokens whose bits are all set in the target.
    pub candidates: Vec<String>,
    /// The candidates are the only token set reproducing the target.
    pub exact_recovery: bool,
    /// More candidates than the budget; `candidates` is a prefix.
    pub truncated: bool,
}

impl RecoveryResult {
    /// Candidates beyond the true token count.
    pub fn ambiguity(&self, true_tokens: usize) -> usize {
        self.candidates.len().saturating_sub(true_tokens)
    }
}

/// Brute-force recovery against one key set, with every universe token
/// hashed once up front.
pub struct Enumerator {
    params: FingerprintParams,
    tokens: Vec<(String, Vec<usize>)>,
}

impl Enumerator {
    pub fn new(universe: &[String], params: &FingerprintParams) -> Result<Self> {
        params.validate()?;
        if universe.is_empty() {
            return Err(Error::Precondition("the universe is empty".into()));
        }
        let tokens = universe
            .par_iter()
            .map(|t| (t.clone(), distinct_positions(params, t)))
            .collect();
        Ok(Enumerator {
            params: params.clone(),
            tokens,
        })
    }

    pub fn recover(&self, target: &Fingerprint, budget: usize) -> Result<RecoveryResult> {
        if target.len() != self.params.l {
            return Err(Error::Param(format!(
                "target has {} bits, attack expects {}",
                target.len(),
                self.params.l
            )));
        }
        let hits: Vec<&(String, Vec<usize>)> = self
            .tokens
            .iter()
            .filter(|(_, bits)| bits.iter().all(|&b| target.bits.get(b)))
            .collect();
        let truncated = hits.len() > budget;
        let exact_recovery = !truncated && self.uniquely_determined(&target.bits, &hits);
        Ok(RecoveryResult {
            record_id: target.record_id,
            candidates: hits.iter().take(budget).map(|(t, _)| t.clone()).collect(),
            exact_recovery,
            truncated,
        })
    }

    /// Unique when the candidates cover the target and each sets a bit no
    /// other candidate sets, so no candidate can be dropped.
    fn uniquely_determined(&self, target: &BitArray, hits: &[&(String, Vec<usize>)]) -> bool {
        let mut cover = vec![0u32; self.params.l];
        for (_, bits) in hits {
            for &b in bits {
                cover[b] += 1;
            }
        }
        target.ones().all(|b| cover[b] > 0)
            && hits.iter().all(|(_, bits)| bits.iter().any(|&b| cover[b] == 1))
    }
}

pub fn enumeration_attack(
    target: &Fingerprint,
    universe: &[String],
    params: &FingerprintParams,
    budget: usize,
) -> Result<RecoveryResult> {
    Enumerator::new(universe, params)?.recover(target, budget)
}

/// Exact map from fingerprint bytes to every cleartext producing them.
#[derive(Clone, Debug)]
pub struct RainbowTable {
    header: FingerprintHeader,
    table: HashMap<Vec<u8>, Vec<String>>,
}

impl RainbowTable {
    pub fn build<S: AsRef<str> + Sync>(
        cleartexts: &[S],
        tokenizer: &Tokenizer,
        params: &FingerprintParams,
    ) -> Result<Self> {
        params.validate()?;
        let encoded: Vec<(Vec<u8>, String)> = cleartexts
            .par_iter()
            .filter_map(|text| {
                let text = text.as_ref();
                let set = tokenizer.tokenize(&RawRecord::new(0, 0, text)).ok()?;
                let bits = encode_tokens(set.tokens.iter().map(String::as_str), params);
                Some((bits.to_bytes(), text.to_string()))
            })
            .collect();
        let mut table: HashMap<Vec<u8>, Vec<String>> = HashMap::new();
        for (key, text) in encoded {
            table.entry(key).or_default().push(text);
        }
        Ok(RainbowTable {
            header: FingerprintHeader::of(params),
            table,
        })
    }

    pub fn header(&self) -> &FingerprintHeader {
        &self.header
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn lookup(&self, fp: &Fingerprint) -> &[String] {
        if fp.len() != self.header.l {
            return &[];
        }
        self.table.get(&fp.bits.to_bytes()).map_or(&[], Vec::as_slice)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LintWarning {
    /// Collisions are so rare that each token has a unique bit pattern.
    UniqueEncoding { false_positive_rate: f64 },
    MoreHashesThanBits { k: usize, l: usize },
}

pub const UNIQUE_ENCODING_LIMIT: f64 = 1e-3;

/// Flags parameter choices that make fingerprints easy to invert.
pub fn lint_parameters(u: usize, k: usize, l: usize) -> Result<Vec<LintWarning>> {
    let mut out = Vec::new();
    let f = false_positive_rate(u, k, l)?;
    if f < UNIQUE_ENCODING_LIMIT {
        out.push(LintWarning::UniqueEncoding {
            false_positive_rate: f,
        });
    }
    if k > l {
        out.push(LintWarning::MoreHashesThanBits { k, l });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TokenSet;
    use crate::p4join::fingerprint;

    fn params(k: usize, l: usize) -> FingerprintParams {
        FingerprintParams::new(k, l, "attack-f", "attack-g").unwrap()
    }

    fn set(id: u64, tokens: &[&str]) -> TokenSet {
        TokenSet {
            record_id: RecordId(id),
            owner_id: 0,
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn universe_size() {
        let u = default_universe();
        assert_eq!(u.len(), 38 * 38);
        assert!(u.contains(&"_t".to_string()) && u.contains(&"9 ".to_string()));
    }

    #[test]
    fn sensitivity_formula() {
        assert_eq!(sensitivity(2, 4), Some(0.5));
        assert_eq!(sensitivity(1, 1), Some(1.0));
        assert_eq!(sensitivity(0, 3), None);
        assert_eq!(sensitivity(0, 0), None);
    }

    #[test]
    fn sensitivity_counts_match_direct_recount() {
        let p = params(2, 40);
        let universe: Vec<String> = ["ab", "bc", "cd", "de", "ef", "zz"].iter().map(|s| s.to_string()).collect();
        let corpus: Vec<_> = [set(0, &["ab", "bc"]), set(1, &["bc"]), set(2, &["zz", "ab"])]
            .iter()
            .map(|s| fingerprint(s, &p))
            .collect();
        let r = bit_sensitivity(&corpus, &FingerprintHeader::of(&p), &universe, &p).unwrap();
        for b in &r.bits {
            let dist = universe.iter().filter(|t| p.positions(t).contains(&b.position)).count();
            let freq = corpus.iter().filter(|f| f.bits.get(b.position)).count();
            assert_eq!((b.dist, b.freq), (dist, freq));
            if let Some(s) = b.s {
                assert!(s > 0.0 && s <= 1.0);
            }
        }
        let wrong = FingerprintHeader::of(&params(3, 40));
        assert!(matches!(bit_sensitivity(&corpus, &wrong, &universe, &p), Err(Error::Param(_))));
    }

    #[test]
    fn rare_dominant_token_ranks_first() {
        // "qq" owns its bit and appears once; every other bit is shared by
        // at least two universe tokens that appear in five records
        let p = params(1, 16);
        let q_bit = p.positions("qq")[0];
        let others: Vec<String> = (0..100)
            .map(|i| format!("t{i}"))
            .filter(|t| p.positions(t)[0] != q_bit)
            .collect();
        let shared: Vec<String> = others
            .iter()
            .filter(|t| others.iter().filter(|o| p.positions(o) == p.positions(t)).count() >= 2)
            .cloned()
            .collect();
        let common: Vec<&str> = shared.iter().map(String::as_str).collect();
        let mut corpus: Vec<_> = (0..5).map(|i| fingerprint(&set(i, &common), &p)).collect();
        corpus.push(fingerprint(&set(9, &["qq"]), &p));
        let universe: Vec<String> = shared.iter().cloned().chain(["qq".to_string()]).collect();
        let r = bit_sensitivity(&corpus, &FingerprintHeader::of(&p), &universe, &p).unwrap();
        let ranked = r.ranked();
        assert_eq!(ranked[0].position, q_bit);
        assert_eq!(ranked[0].s, Some(1.0));
        assert!(ranked[1..].iter().all(|b| b.s.is_none_or(|s| s <= 0.5)));
    }

    #[test]
    fn sensitivity_csv_has_header_and_blank_for_undefined() {
        let p = params(1, 8);
        let r = bit_sensitivity(&[], &FingerprintHeader::of(&p), &[], &p).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("position,dist,freq,S\n0,0,0,\n"));
    }

    #[test]
    fn sparse_encoding_is_recovered_exactly() {
        let universe = default_universe();
        let p = params(2, 200_000);
        let truth = set(3, &["_t", "to", "on", "ny", "y_"]);
        let r = enumeration_attack(&fingerprint(&truth, &p), &universe, &p, 100).unwrap();
        let mut got = r.candidates.clone();
        got.sort();
        let mut want = truth.tokens.clone();
        want.sort();
        assert_eq!(got, want);
        assert!(r.exact_recovery && !r.truncated);
        assert_eq!(r.ambiguity(5), 0);
    }

    #[test]
    fn dense_encoding_is_ambiguous_but_complete() {
        let universe = default_universe();
        let p = params(2, 30);
        let truth = set(3, &["_t", "to", "on", "ny", "y_", "_s", "st", "ta", "ar", "rk"]);
        let r = enumeration_attack(&fingerprint(&truth, &p), &universe, &p, usize::MAX).unwrap();
        assert!(truth.tokens.iter().all(|t| r.candidates.contains(t)));
        assert!(r.ambiguity(truth.len()) > 0);
        assert!(!r.exact_recovery);
        let capped = enumeration_attack(&fingerprint(&truth, &p), &universe, &p, 3).unwrap();
        assert!(capped.truncated && capped.candidates.len() == 3 && !capped.exact_recovery);
    }

    #[test]
    fn rainbow_hits_misses_and_collisions() {
        let tok = Tokenizer::default();
        let p = params(2, 12);
        // search a small name space until two names share a fingerprint
        let names: Vec<String> = (0..400).map(|i| format!("n{i}")).collect();
        let table = RainbowTable::build(&names, &tok, &p).unwrap();
        let fp_of = |s: &str| {
            let ts = tok.tokenize(&RawRecord::new(0, 0, s)).unwrap();
            fingerprint(&ts, &p)
        };
        assert!(table.lookup(&fp_of("n7")).contains(&"n7".to_string()));
        let (a, b) = names
            .iter()
            .flat_map(|a| names.iter().map(move |b| (a, b)))
            .find(|(a, b)| a < b && fp_of(a) == fp_of(b))
            .expect("12 bits cannot separate 400 names");
        let hit = table.lookup(&fp_of(a));
        assert!(hit.contains(a) && hit.contains(b));

        let wide = params(2, 4096);
        let table = RainbowTable::build(&["tony stark"], &tok, &wide).unwrap();
        assert_eq!(table.lookup(&fp_of_with(&tok, "bruce banner", &wide)), &[] as &[String]);
        assert_eq!(table.lookup(&fp_of_with(&tok, "tony stark", &wide)), ["tony stark"]);
    }

    fn fp_of_with(tok: &Tokenizer, s: &str, p: &FingerprintParams) -> Fingerprint {
        fingerprint(&tok.tokenize(&RawRecord::new(0, 0, s)).unwrap(), p)
    }

    #[test]
    fn linter() {
        let w = lint_parameters(500, 2, 100_000).unwrap();
        assert!(matches!(w[..], [LintWarning::UniqueEncoding { .. }]));
        assert!(lint_parameters(500, 2, 1000).unwrap().is_empty());
        let w = lint_parameters(1, 20, 10).unwrap();
        assert!(w.contains(&LintWarning::MoreHashesThanBits { k: 20, l: 10 }));
    }
}
