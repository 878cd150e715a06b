//! Records, datasets and n-gram tokenization.

mod synthetic;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synthetic::{generate_synthetic, SyntheticCorpus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RecordId(pub u64);

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub record_id: RecordId,
    pub owner_id: usize,
    pub text: String,
}

impl RawRecord {
    pub fn new(record_id: u64, owner_id: usize, text: impl Into<String>) -> Self {
        RawRecord {
            record_id: RecordId(record_id),
            owner_id,
            text: text.into(),
        }
    }
}

/// The records held by one data owner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    owner_id: usize,
    records: Vec<RawRecord>,
}

impl Dataset {
    /// Takes ownership of `records`, rewriting their `owner_id` to `owner_id`.
    pub fn new(owner_id: usize, mut records: Vec<RawRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &mut records {
            if !seen.insert(r.record_id) {
                return Err(Error::DuplicateId(r.record_id));
            }
            r.owner_id = owner_id;
        }
        Ok(Dataset { owner_id, records })
    }

    pub fn owner_id(&self) -> usize {
        self.owner_id
    }

    pub fn records(&self) -> &[RawRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<RawRecord> {
        self.records
    }
}

/// A record as a set of n-grams, kept in first-occurrence order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSet {
    pub record_id: RecordId,
    pub owner_id: usize,
    pub tokens: Vec<String>,
}

impl TokenSet {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercases, collapses whitespace runs to one space and trims.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub n: usize,
    pub pad: char,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer { n: 2, pad: '_' }
    }
}

impl Tokenizer {
    pub fn new(n: usize, pad: char) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("gram size must be at least 1".into()));
        }
        Ok(Tokenizer { n, pad })
    }

    /// Grams of `pad + normalize(text) + pad`, duplicates dropped.
    pub fn grams(&self, record_id: RecordId, text: &str) -> Result<Vec<String>> {
        let text = normalize(text);
        if text.is_empty() {
            return Err(Error::EmptyRecord(record_id));
        }
        let padded: Vec<char> = std::iter::once(self.pad)
            .chain(text.chars())
            .chain(std::iter::once(self.pad))
            .collect();
        if padded.len() < self.n {
            return Err(Error::RecordTooShort {
                record: record_id,
                n: self.n,
            });
        }
        let mut seen = HashSet::new();
        Ok(padded
            .windows(self.n)
            .map(|w| w.iter().collect::<String>())
            .filter(|g| seen.insert(g.clone()))
            .collect())
    }

    pub fn tokenize(&self, record: &RawRecord) -> Result<TokenSet> {
        Ok(TokenSet {
            record_id: record.record_id,
            owner_id: record.owner_id,
            tokens: self.grams(record.record_id, &record.text)?,
        })
    }

    pub fn tokenize_dataset(&self, dataset: &Dataset) -> Result<Vec<TokenSet>> {
        dataset.records().iter().map(|r| self.tokenize(r)).collect()
    }
}

pub fn tokenize(record: &RawRecord, n: usize, pad: char) -> Result<TokenSet> {
    Tokenizer::new(n, pad)?.tokenize(record)
}

/// Loads one owner's records from a headered CSV file.
pub fn load_csv(
    path: impl AsRef<Path>,
    id_column: &str,
    text_columns: &[&str],
    owner_id: usize,
) -> Result<Dataset> {
    read_csv(std::fs::File::open(path)?, id_column, text_columns, owner_id)
}

/// As [`load_csv`], from any reader. An empty `text_columns` selects every
/// column except the id column, in file order.
pub fn read_csv<R: io::Read>(
    input: R,
    id_column: &str,
    text_columns: &[&str],
    owner_id: usize,
) -> Result<Dataset> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
    };
    let id_idx = position(id_column)?;
    let text_idx: Vec<usize> = if text_columns.is_empty() {
        (0..headers.len()).filter(|&i| i != id_idx).collect()
    } else {
        text_columns
            .iter()
            .map(|c| position(c))
            .collect::<Result<_>>()?
    };

    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let raw_id = row.get(id_idx).unwrap_or("").trim();
        let id: u64 = raw_id.parse().map_err(|_| {
            Error::Schema(format!("row {}: id {raw_id:?} is not an integer", line + 1))
        })?;
        let text = text_idx
            .iter()
            .map(|&i| row.get(i).unwrap_or(""))
            .collect::<Vec<_>>()
            .join(" ");
        records.push(RawRecord::new(id, owner_id, text));
    }
    Dataset::new(owner_id, records)
}

/// Writes records as `rec_id,text`.
pub fn write_csv<W: io::Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rec_id", "text"])?;
    for r in dataset.records() {
        w.write_record([r.record_id.to_string().as_str(), r.text.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// Cuts `dataset` into consecutive, non-empty parts of the given sizes,
/// numbering the resulting owners `0..sizes.len()`.
pub fn split_dataset(dataset: &Dataset, sizes: &[usize]) -> Result<Vec<Dataset>> {
    let total: usize = sizes.iter().sum();
    if total != dataset.len() {
        return Err(Error::Config(format!(
            "split sizes sum to {total}, dataset has {} records",
            dataset.len()
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::Config("every split must be non-empty".into()));
    }
    let mut rest = dataset.records();
    sizes
        .iter()
        .enumerate()
        .map(|(owner, &size)| {
            let (head, tail) = rest.split_at(size);
            rest = tail;
            Dataset::new(owner, head.to_vec())
        })
        .collect()
}

/// Owner of each record id across several datasets.
pub fn owner_index(datasets: &[Dataset]) -> HashMap<RecordId, usize> {
    datasets
        .iter()
        .flat_map(|d| d.records().iter().map(|r| (r.record_id, r.owner_id)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grams(text: &str) -> Vec<String> {
        Tokenizer::default().grams(RecordId(0), text).unwrap()
    }

    /// Independent sliding window: byte-level, so only valid for ASCII.
    fn naive_bigrams(text: &str) -> Vec<String> {
        let padded = format!("_{}_", text.to_lowercase());
        let mut out: Vec<String> = Vec::new();
        for i in 0..padded.len() - 1 {
            let g = padded[i..i + 2].to_string();
            if !out.contains(&g) {
                out.push(g);
            }
        }
        out
    }

    #[test]
    fn tony_bigrams() {
        assert_eq!(grams("Tony"), ["_t", "to", "on", "ny", "y_"]);
    }

    #[test]
    fn single_char_record() {
        assert_eq!(grams("a"), ["_a", "a_"]);
    }

    #[test]
    fn tony_stark_matches_naive_window() {
        let g = grams("tony stark");
        assert_eq!(g, naive_bigrams("tony stark"));
        // 12 padded chars give 11 windows, none repeated here
        assert_eq!(g.len(), 11);
    }

    #[test]
    fn duplicates_keep_first_occurrence() {
        assert_eq!(grams("anana"), ["_a", "an", "na", "a_"]);
    }

    #[test]
    fn empty_and_short_records_are_rejected() {
        let t = Tokenizer::default();
        assert!(matches!(t.grams(RecordId(4), "   "), Err(Error::EmptyRecord(RecordId(4)))));
        let four = Tokenizer::new(4, '_').unwrap();
        assert!(matches!(four.grams(RecordId(1), "a"), Err(Error::RecordTooShort { .. })));
        assert!(Tokenizer::new(0, '_').is_err());
    }

    #[test]
    fn normalization_collapses_whitespace() {
        assert_eq!(normalize("  Tony \t  STARK \n"), "tony stark");
    }

    #[test]
    fn csv_joins_text_columns() {
        let data = "id,first,last,extra\n1,tony,stark,x\n2,pepper,potts,y\n";
        let ds = read_csv(data.as_bytes(), "id", &["first", "last"], 3).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.records()[0].text, "tony stark");
        assert_eq!(ds.records()[1].owner_id, 3);
        let all = read_csv(data.as_bytes(), "id", &[], 0).unwrap();
        assert_eq!(all.records()[0].text, "tony stark x");
    }

    #[test]
    fn csv_errors() {
        let dup = "id,name\n1,a\n1,b\n";
        assert!(matches!(
            read_csv(dup.as_bytes(), "id", &["name"], 0),
            Err(Error::DuplicateId(RecordId(1)))
        ));
        let ok = "id,name\n1,a\n";
        assert!(matches!(read_csv(ok.as_bytes(), "rid", &[], 0), Err(Error::Schema(_))));
        assert!(matches!(read_csv(ok.as_bytes(), "id", &["nope"], 0), Err(Error::Schema(_))));
        let bad_id = "id,name\nx,a\n";
        assert!(matches!(read_csv(bad_id.as_bytes(), "id", &[], 0), Err(Error::Schema(_))));
    }

    #[test]
    fn csv_quoting_and_row_order() {
        let data = "id,name\n5,\"stark, tony\"\n2,\"say \"\"hi\"\"\"\n";
        let ds = read_csv(data.as_bytes(), "id", &[], 0).unwrap();
        assert_eq!(ds.records()[0].text, "stark, tony");
        assert_eq!(ds.records()[1].text, "say \"hi\"");
        assert_eq!(ds.records()[0].record_id, RecordId(5));
    }

    #[test]
    fn write_then_read() {
        let ds = Dataset::new(0, vec![RawRecord::new(1, 0, "a, b"), RawRecord::new(2, 0, "c")]).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice(), "rec_id", &[], 0).unwrap(), ds);
    }

    #[test]
    fn split_sizes() {
        let ds = Dataset::new(0, (0..500).map(|i| RawRecord::new(i, 0, "x")).collect()).unwrap();
        let parts = split_dataset(&ds, &[100, 400]).unwrap();
        assert_eq!((parts[0].len(), parts[1].len()), (100, 400));
        assert_eq!(parts[1].records()[0].owner_id, 1);
        assert_eq!(parts[1].records()[0].record_id, RecordId(100));

        let small = Dataset::new(0, (0..100).map(|i| RawRecord::new(i, 0, "x")).collect()).unwrap();
        let parts = split_dataset(&small, &[20, 80]).unwrap();
        assert_eq!((parts[0].len(), parts[1].len()), (20, 80));
        assert!(matches!(split_dataset(&small, &[100, 0]), Err(Error::Config(_))));
        assert!(matches!(split_dataset(&small, &[20, 70]), Err(Error::Config(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn token_count_bounded_by_windows(text in "[a-zA-Z0-9 ]{1,40}", n in 1usize..5) {
                let t = Tokenizer::new(n, '_').unwrap();
                let norm = normalize(&text);
                prop_assume!(!norm.is_empty() && norm.chars().count() + 2 >= n);
                let grams = t.grams(RecordId(0), &text).unwrap();
                prop_assert!(!grams.is_empty());
                prop_assert!(grams.len() <= norm.chars().count() + 2 - n + 1);
                prop_assert!(grams.iter().all(|g| g.chars().count() == n));
                let unique: HashSet<_> = grams.iter().collect();
                prop_assert_eq!(unique.len(), grams.len());
            }

            #[test]
            fn tokenizing_normalized_text_is_idempotent(text in "[a-zA-Z ]{1,30}") {
                prop_assume!(!normalize(&text).is_empty());
                let t = Tokenizer::default();
                prop_assert_eq!(
                    t.grams(RecordId(0), &text).unwrap(),
                    t.grams(RecordId(0), &normalize(&text)).unwrap()
                );
            }

            #[test]
            fn ascii_bigrams_match_naive(text in "[a-z0-9]{1,12}( [a-z0-9]{1,12}){0,3}") {
                prop_assert_eq!(grams(&text), naive_bigrams(&text));
            }
        }
    }
}
