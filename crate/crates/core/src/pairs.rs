use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::hash::{Hash, Hasher};
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::RecordId;
use crate::error::Result;

/// An unordered record pair stored as `(a, b)` with `a < b`.
///
/// Equality, ordering and hashing look at the ids only; `certified` records
/// whether the engine proved `Jaccard >= t` exactly (PPJoin and the HE
/// protocol) or only under an approximate encoding (P4Join).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MatchPair {
    pub a: RecordId,
    pub b: RecordId,
    pub certified: bool,
}

impl MatchPair {
    pub fn new(x: RecordId, y: RecordId, certified: bool) -> Self {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        MatchPair { a, b, certified }
    }

    pub fn certified(x: RecordId, y: RecordId) -> Self {
        Self::new(x, y, true)
    }

    pub fn ids(&self) -> (RecordId, RecordId) {
        (self.a, self.b)
    }
}

impl PartialEq for MatchPair {
    fn eq(&self, other: &Self) -> bool {
        self.ids() == other.ids()
    }
}

impl Eq for MatchPair {}

impl Hash for MatchPair {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.ids().hash(state)
    }
}

impl PartialOrd for MatchPair {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MatchPair {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ids().cmp(&other.ids())
    }
}

pub type PairSet = BTreeSet<MatchPair>;

#[derive(Serialize, Deserialize)]
struct PairRow {
    id_a: u64,
    id_b: u64,
}

pub fn write_pairs<W: io::Write>(pairs: &PairSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in pairs {
        w.serialize(PairRow {
            id_a: p.a.0,
            id_b: p.b.0,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pairs_file(pairs: &PairSet, path: impl AsRef<Path>) -> Result<()> {
    write_pairs(pairs, std::fs::File::create(path)?)
}

/// Reads a two-column `(id_a, id_b)` CSV with a header row. Pairs are
/// canonicalized, so the column order in the file does not matter.
pub fn read_pairs<R: io::Read>(input: R) -> Result<PairSet> {
    let mut r = csv::Reader::from_reader(input);
    let mut pairs = PairSet::new();
    for row in r.deserialize() {
        let row: PairRow = row?;
        pairs.insert(MatchPair::certified(RecordId(row.id_a), RecordId(row.id_b)));
    }
    Ok(pairs)
}

pub fn read_pairs_file(path: impl AsRef<Path>) -> Result<PairSet> {
    read_pairs(std::fs::File::open(path)?)
}
