//! Keyed Bloom-style fingerprints, Tanimoto similarity and the P4Join
//! cardinality join.

mod fingerprint;
mod io;
mod join;

use rayon::prelude::*;

use crate::dataset::TokenSet;

pub use fingerprint::{encode_tokens, fingerprint, tanimoto, BitArray, Fingerprint, FingerprintParams};
pub use io::{
    read_fingerprints, read_fingerprints_file, write_fingerprints, write_fingerprints_file,
    FingerprintHeader,
};
pub use join::{
    false_positive_rate, full_tanimoto, optimal_k, optimal_length, p4join, sort_by_cardinality,
    tanimoto_at_least, BitOrdering, FilterToggles, OptimalK, P4Counters, P4JoinOutput,
};

/// Fingerprints every record, in input order.
pub fn fingerprint_all(sets: &[TokenSet], params: &FingerprintParams) -> Vec<Fingerprint> {
    sets.par_iter().map(|s| fingerprint(s, params)).collect()
}

/// Fraction of `probes` whose bits are all set by the `members` encoding,
/// the empirical counterpart of [`false_positive_rate`].
pub fn measured_false_positive_rate<'a>(
    params: &FingerprintParams,
    members: impl IntoIterator<Item = &'a str>,
    probes: &[String],
) -> f64 {
    let bits = encode_tokens(members, params);
    let hits = probes
        .par_iter()
        .filter(|p| params.positions(p).into_iter().all(|b| bits.get(b)))
        .count();
    hits as f64 / probes.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RecordId;
    use crate::ppjoin::JoinScope;
    use crate::{Error, Threshold};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(k: usize, l: usize) -> FingerprintParams {
        FingerprintParams::new(k, l, "join-f", "join-g").unwrap()
    }

    fn random_sets(seed: u64, n: usize, owners: usize) -> Vec<TokenSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let len = rng.gen_range(2..12);
                let mut tokens: Vec<String> = Vec::new();
                while tokens.len() < len {
                    let tok = format!("w{}", rng.gen_range(0..30));
                    if !tokens.contains(&tok) {
                        tokens.push(tok);
                    }
                }
                TokenSet {
                    record_id: RecordId(i as u64),
                    owner_id: rng.gen_range(0..owners),
                    tokens,
                }
            })
            .collect()
    }

    fn sorted_fps(seed: u64, n: usize, l: usize) -> Vec<Fingerprint> {
        let mut fps = fingerprint_all(&random_sets(seed, n, 2), &params(2, l));
        sort_by_cardinality(&mut fps);
        fps
    }

    fn all_toggles() -> Vec<FilterToggles> {
        (0..8)
            .map(|m| FilterToggles {
                length: m & 1 != 0,
                prefix: m & 2 != 0,
                position: m & 4 != 0,
            })
            .collect()
    }

    /// Double loop scoring with floating-point Tanimoto on index sets.
    fn oracle(fps: &[Fingerprint], t: f64, cross: bool) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        for i in 0..fps.len() {
            for j in i + 1..fps.len() {
                if cross && fps[i].owner_id == fps[j].owner_id {
                    continue;
                }
                let a: std::collections::BTreeSet<_> = fps[i].bits.ones().collect();
                let b: std::collections::BTreeSet<_> = fps[j].bits.ones().collect();
                let common = a.intersection(&b).count() as f64;
                if common / a.union(&b).count() as f64 >= t - 1e-12 {
                    let (x, y) = (fps[i].record_id.0, fps[j].record_id.0);
                    out.push((x.min(y), x.max(y)));
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn ids(pairs: &crate::PairSet) -> Vec<(u64, u64)> {
        pairs.iter().map(|p| (p.a.0, p.b.0)).collect()
    }

    #[test]
    fn unfiltered_join_is_full_comparison() {
        for seed in 0..5 {
            let fps = sorted_fps(seed, 80, 64);
            for tenths in [2, 5, 8] {
                let t = Threshold::new(tenths, 10).unwrap();
                let out = p4join(&fps, t, FilterToggles::NONE, JoinScope::CrossOwner).unwrap();
                assert_eq!(ids(&out.pairs), oracle(&fps, tenths as f64 / 10.0, true));
                assert!(out.pairs.iter().all(|p| !p.certified));
            }
        }
    }

    #[test]
    fn every_filter_combination_is_lossless() {
        for seed in 0..8 {
            let fps = sorted_fps(10 + seed, 120, 96);
            for tenths in 1..=9 {
                let t = Threshold::new(tenths, 10).unwrap();
                for scope in [JoinScope::AllPairs, JoinScope::CrossOwner] {
                    let full = full_tanimoto(&fps, t, scope);
                    for f in all_toggles() {
                        let out = p4join(&fps, t, f, scope).unwrap();
                        assert_eq!(out.pairs, full, "seed {seed} t {t} {f:?}");
                        assert_eq!(out.counters.emitted as usize, full.len());
                    }
                }
            }
        }
    }

    #[test]
    fn filters_cut_evaluations_more_at_high_threshold() {
        for seed in 0..5 {
            let fps = sorted_fps(30 + seed, 150, 128);
            let evals = |t: &str| {
                p4join(&fps, t.parse().unwrap(), FilterToggles::ALL, JoinScope::AllPairs)
                    .unwrap()
                    .counters
                    .tanimoto_evaluations
            };
            assert!(evals("0.8") <= evals("0.2"));
            let none = p4join(&fps, "0.8".parse().unwrap(), FilterToggles::NONE, JoinScope::AllPairs).unwrap();
            assert!(evals("0.8") < none.counters.tanimoto_evaluations);
        }
    }

    #[test]
    fn unsorted_or_mixed_input_is_rejected() {
        let mut fps = sorted_fps(1, 20, 64);
        let t: Threshold = "0.5".parse().unwrap();
        fps.reverse();
        assert!(matches!(p4join(&fps, t, FilterToggles::ALL, JoinScope::AllPairs), Err(Error::Precondition(_))));
        let mut mixed = sorted_fps(1, 3, 64);
        mixed.push(Fingerprint::from_bits(RecordId(99), 0, BitArray::zeros(32)));
        assert!(matches!(p4join(&mixed, t, FilterToggles::ALL, JoinScope::AllPairs), Err(Error::Param(_))));
    }

    #[test]
    fn bit_ordering_is_a_frequency_permutation() {
        let fps = sorted_fps(2, 50, 40);
        let o = BitOrdering::from_fingerprints(&fps, 40);
        let mut bits: Vec<usize> = (0..40).map(|r| o.bit(r)).collect();
        let freq = |b: usize| fps.iter().filter(|f| f.bits.get(b)).count();
        assert!(bits.windows(2).all(|w| (freq(w[0]), w[0]) < (freq(w[1]), w[1])));
        for b in 0..40 {
            assert_eq!(o.bit(o.rank(b)), b);
        }
        bits.sort_unstable();
        assert_eq!(bits, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn parameter_formulas() {
        let l = optimal_length(3, 9025).unwrap();
        assert!((l - 39060.0).abs() <= 1.0, "{l}");
        let k = optimal_k(1000, 1000).unwrap();
        assert!((k.exact - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(k.rounded, 1);
        let doubled = optimal_k(2000, 1000).unwrap();
        assert!((doubled.exact - 2.0 * k.exact).abs() < 1e-12);
        assert_eq!(optimal_k(1, 1_000_000).unwrap().rounded, 1);
        let f = false_positive_rate(100, 1, 100).unwrap();
        assert!((f - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!(false_positive_rate(10, 2, 1_000_000).unwrap() < 1e-8);
        assert!(false_positive_rate(0, 2, 10).is_err());
        assert!(optimal_k(0, 2).is_err());
    }

    #[test]
    fn measured_rate_tracks_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let members: Vec<String> = (0..300).map(|i| format!("m{i}")).collect();
        let probes: Vec<String> = (0..10_000).map(|_| format!("p{}", rng.gen::<u64>())).collect();
        let p = params(2, 600);
        let measured = measured_false_positive_rate(&p, members.iter().map(String::as_str), &probes);
        let expected = false_positive_rate(300, 2, 600).unwrap();
        assert!((measured - expected).abs() < 0.03, "{measured} vs {expected}");
    }

    #[test]
    fn file_round_trip_and_header_check() {
        let p = params(2, 70);
        let fps = sorted_fps(4, 10, 70);
        let header = FingerprintHeader::of(&p);
        let mut buf = Vec::new();
        write_fingerprints(&header, &fps, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(!text.contains("join-f"));
        let (h, back) = read_fingerprints(&buf[..]).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, fps);
        h.check(&p).unwrap();
        assert!(matches!(h.check(&params(3, 70)), Err(Error::Param(_))));
        let other = FingerprintParams::new(2, 70, "x", "join-g").unwrap();
        assert!(h.check(&other).is_err());
        assert!(read_fingerprints(&b"garbage\n"[..]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn lossless_property(seed in 0u64..5_000, n in 2usize..60, l in 8usize..200, tenths in 1u64..10) {
            let mut fps = fingerprint_all(&random_sets(seed, n, 3), &params(2, l));
            sort_by_cardinality(&mut fps);
            let t = Threshold::new(tenths, 10).unwrap();
            let out = p4join(&fps, t, FilterToggles::ALL, JoinScope::CrossOwner).unwrap();
            prop_assert_eq!(out.pairs, full_tanimoto(&fps, t, JoinScope::CrossOwner));
        }
    }
}
