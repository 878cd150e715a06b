//! Seeded Febrl-style person records with corrupted duplicates.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{normalize, Dataset, RawRecord};
use crate::error::{Error, Result};
use crate::pairs::{MatchPair, PairSet};

const GIVEN: &[&str] = &[
    "james", "olivia", "jack", "charlotte", "william", "amelia", "thomas", "isla", "noah",
    "mia", "oliver", "ava", "lucas", "grace", "henry", "chloe", "leo", "sophie", "ethan",
    "emily", "samuel", "zoe", "harrison", "ruby", "lachlan", "ella", "joshua", "lily",
    "benjamin", "matilda", "daniel", "harper", "liam", "evie", "riley", "georgia", "max",
    "willow", "archie", "hannah", "cooper", "jessica", "ryan", "scarlett", "alexander",
    "madison", "connor", "sienna", "tyler", "jasmine", "dylan", "abigail", "hudson",
    "isabella", "nathan", "sarah", "patrick", "rebecca", "adam", "kate",
];

const SURNAME: &[&str] = &[
    "smith", "jones", "williams", "brown", "wilson", "taylor", "johnson", "white",
    "martin", "anderson", "thompson", "nguyen", "thomas", "walker", "harris", "lee",
    "ryan", "robinson", "kelly", "king", "davis", "wright", "evans", "roberts", "green",
    "hall", "wood", "jackson", "clarke", "patel", "khan", "lewis", "james", "phillips",
    "mitchell", "campbell", "young", "allen", "scott", "baker", "turner", "hill",
    "stewart", "moore", "murphy", "edwards", "hughes", "collins", "cooper", "morris",
    "stark", "potts", "rogers", "barton", "banner", "romanoff", "parker", "strange",
    "odinson", "maximoff",
];

const STREET: &[&str] = &[
    "george street", "king street", "church street", "victoria road", "high street",
    "station street", "park avenue", "queen street", "william street", "elizabeth street",
    "railway parade", "bridge road", "main road", "hill street", "albert street",
    "wattle avenue", "banksia crescent", "river terrace", "ocean parade", "mountain view",
    "lake drive", "forest way", "sunset boulevard", "collins street", "bourke street",
    "flinders lane", "hunter street", "pitt street", "macquarie street", "oxford street",
    "canterbury road", "pacific highway", "darling drive", "hume highway", "anzac parade",
    "regent street", "beach road", "garden grove", "orchard place", "miller street",
];

const SUBURB: &[&str] = &[
    "parramatta", "bondi", "manly", "newtown", "chatswood", "fitzroy", "carlton",
    "richmond", "st kilda", "brunswick", "toowong", "fortitude valley", "paddington",
    "glenelg", "norwood", "fremantle", "subiaco", "sandy bay", "battery point",
    "kingston", "belconnen", "woden", "tuggeranong", "gungahlin", "hamilton", "wollongong",
    "geelong", "ballarat", "bendigo", "townsville", "cairns", "darwin", "palmerston",
    "launceston", "hobart", "albury", "wagga wagga", "dubbo", "orange", "bathurst",
];

const STATE: &[&str] = &["nsw", "vic", "qld", "sa", "wa", "tas", "act", "nt"];

const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

/// A generated corpus: `originals` come first with ids `0..originals`,
/// followed by their duplicates.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub dataset: Dataset,
    /// `(original, duplicate)` pairs.
    pub truth: PairSet,
    pub originals: usize,
}

impl SyntheticCorpus {
    /// Two owners for linkage: owner 0 holds the duplicates, owner 1 the
    /// originals, so every truth pair crosses owners.
    pub fn owner_split(&self) -> Result<Vec<Dataset>> {
        let records = self.dataset.records();
        let (orig, dups) = records.split_at(self.originals);
        if dups.is_empty() {
            return Err(Error::Config("corpus has no duplicates to split off".into()));
        }
        Ok(vec![
            Dataset::new(0, dups.to_vec())?,
            Dataset::new(1, orig.to_vec())?,
        ])
    }
}

fn pick<'a>(rng: &mut impl Rng, words: &[&'a str]) -> &'a str {
    words[rng.gen_range(0..words.len())]
}

fn person(rng: &mut impl Rng) -> String {
    format!(
        "{} {} {} {} {} {} {}",
        pick(rng, GIVEN),
        pick(rng, SURNAME),
        rng.gen_range(1..300),
        pick(rng, STREET),
        pick(rng, SUBURB),
        rng.gen_range(2000..8000),
        pick(rng, STATE),
    )
}

fn random_letter(rng: &mut impl Rng) -> char {
    ALPHABET[rng.gen_range(0..ALPHABET.len())] as char
}

/// Applies one random edit at each position with probability `rate`.
fn corrupt(text: &str, rate: f64, rng: &mut impl Rng) -> String {
    let src: Vec<char> = text.chars().collect();
    let mut out = Vec::with_capacity(src.len() + 4);
    let mut i = 0;
    while i < src.len() {
        if !rng.gen_bool(rate) {
            out.push(src[i]);
            i += 1;
            continue;
        }
        match rng.gen_range(0..4) {
            0 => {
                out.push(random_letter(rng));
                i += 1;
            }
            1 => i += 1,
            2 => {
                out.push(random_letter(rng));
                out.push(src[i]);
                i += 1;
            }
            _ => {
                if i + 1 < src.len() {
                    out.push(src[i + 1]);
                    out.push(src[i]);
                    i += 2;
                } else {
                    out.push(src[i]);
                    i += 1;
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Generates `n_originals` records plus `n_duplicates` corrupted copies, each
/// of a distinct original.
pub fn generate_synthetic(
    seed: u64,
    n_originals: usize,
    n_duplicates: usize,
    corruption_rate: f64,
) -> Result<SyntheticCorpus> {
    if n_duplicates > n_originals {
        return Err(Error::Config(format!(
            "{n_duplicates} duplicates need at least as many originals, got {n_originals}"
        )));
    }
    if !(0.0..=1.0).contains(&corruption_rate) {
        return Err(Error::Config(format!(
            "corruption rate {corruption_rate} is not in [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records: Vec<RawRecord> = (0..n_originals)
        .map(|i| RawRecord::new(i as u64, 0, person(&mut rng)))
        .collect();

    let mut sources = sample(&mut rng, n_originals, n_duplicates).into_vec();
    sources.sort_unstable();
    let mut truth = PairSet::new();
    for (k, src) in sources.into_iter().enumerate() {
        let id = (n_originals + k) as u64;
        let mut text = corrupt(&records[src].text, corruption_rate, &mut rng);
        if normalize(&text).is_empty() {
            text = records[src].text.clone();
        }
        truth.insert(MatchPair::certified(records[src].record_id, crate::RecordId(id)));
        records.push(RawRecord::new(id, 0, text));
    }

    Ok(SyntheticCorpus {
        dataset: Dataset::new(0, records)?,
        truth,
        originals: n_originals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Tokenizer;
    use std::collections::{HashMap, HashSet};

    fn jaccard_of(a: &str, b: &str) -> f64 {
        let t = Tokenizer::default();
        let x: HashSet<_> = t.grams(crate::RecordId(0), a).unwrap().into_iter().collect();
        let y: HashSet<_> = t.grams(crate::RecordId(0), b).unwrap().into_iter().collect();
        x.intersection(&y).count() as f64 / x.union(&y).count() as f64
    }

    #[test]
    fn zero_rate_duplicates_are_exact_copies() {
        let c = generate_synthetic(7, 50, 20, 0.0).unwrap();
        let text: HashMap<_, _> = c.dataset.records().iter().map(|r| (r.record_id, &r.text)).collect();
        assert_eq!(c.truth.len(), 20);
        for p in &c.truth {
            assert_eq!(text[&p.a], text[&p.b]);
            assert_eq!(jaccard_of(text[&p.a], text[&p.b]), 1.0);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic(42, 100, 20, 0.1).unwrap();
        let b = generate_synthetic(42, 100, 20, 0.1).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.truth, b.truth);
        let c = generate_synthetic(43, 100, 20, 0.1).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn noisy_duplicates_stay_similar() {
        let c = generate_synthetic(3, 100, 20, 0.1).unwrap();
        let text: HashMap<_, _> = c.dataset.records().iter().map(|r| (r.record_id, &r.text)).collect();
        assert_eq!(c.truth.len(), 20);
        let floor = c
            .truth
            .iter()
            .map(|p| jaccard_of(text[&p.a], text[&p.b]))
            .fold(f64::INFINITY, f64::min);
        // measured floor for this seed is well above 0.3; keep a margin
        assert!(floor > 0.3, "floor {floor}");
        // every duplicate derives from a distinct original
        let originals: HashSet<_> = c.truth.iter().map(|p| p.a).collect();
        assert_eq!(originals.len(), 20);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(matches!(generate_synthetic(1, 5, 6, 0.1), Err(Error::Config(_))));
        assert!(matches!(generate_synthetic(1, 5, 2, 1.5), Err(Error::Config(_))));
    }

    #[test]
    fn owner_split_crosses_every_truth_pair() {
        let c = generate_synthetic(11, 80, 20, 0.1).unwrap();
        let parts = c.owner_split().unwrap();
        assert_eq!((parts[0].len(), parts[1].len()), (20, 80));
        let owner = crate::dataset::owner_index(&parts);
        for p in &c.truth {
            assert_ne!(owner[&p.a], owner[&p.b]);
        }
    }
}
