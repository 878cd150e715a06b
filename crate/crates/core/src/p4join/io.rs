//! Fingerprint files: one header line, then `record_id,owner_id,bits` rows
//! with the bits in hex.

use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::RecordId;
use crate::error::{Error, Result};

use super::fingerprint::{BitArray, Fingerprint, FingerprintParams};

const MAGIC: &str = "#fingerprints";

/// Everything a consumer needs to interpret the rows, without the keys.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintHeader {
    pub k: usize,
    pub l: usize,
    pub key_digest: String,
}

impl FingerprintHeader {
    pub fn of(params: &FingerprintParams) -> Self {
        FingerprintHeader {
            k: params.k,
            l: params.l,
            key_digest: params.key_digest(),
        }
    }

    /// Fails unless `params` produced the fingerprints under this header.
    pub fn check(&self, params: &FingerprintParams) -> Result<()> {
        let other = Self::of(params);
        if *self != other {
            return Err(Error::Param(format!(
                "fingerprints were built with k={} l={} keys={}, not k={} l={} keys={}",
                self.k, self.l, self.key_digest, other.k, other.l, other.key_digest
            )));
        }
        Ok(())
    }

    fn line(&self) -> String {
        format!("{MAGIC} k={} l={} keys={}\n", self.k, self.l, self.key_digest)
    }

    fn parse(line: &str) -> Result<Self> {
        let bad = || Error::Schema(format!("bad fingerprint header {:?}", line.trim_end()));
        let mut parts = line.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(bad());
        }
        let (mut k, mut l, mut key_digest) = (None, None, None);
        for part in parts {
            match part.split_once('=').ok_or_else(bad)? {
                ("k", v) => k = Some(v.parse().map_err(|_| bad())?),
                ("l", v) => l = Some(v.parse().map_err(|_| bad())?),
                ("keys", v) => key_digest = Some(v.to_string()),
                _ => return Err(bad()),
            }
        }
        Ok(FingerprintHeader {
            k: k.ok_or_else(bad)?,
            l: l.ok_or_else(bad)?,
            key_digest: key_digest.ok_or_else(bad)?,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Row {
    record_id: u64,
    owner_id: usize,
    bits: String,
}

pub fn write_fingerprints<W: io::Write>(
    header: &FingerprintHeader,
    fps: &[Fingerprint],
    mut out: W,
) -> Result<()> {
    out.write_all(header.line().as_bytes())?;
    let mut w = csv::Writer::from_writer(out);
    for fp in fps {
        if fp.len() != header.l {
            return Err(Error::Param(format!(
                "fingerprint {} has {} bits, header says {}",
                fp.record_id,
                fp.len(),
                header.l
            )));
        }
        w.serialize(Row {
            record_id: fp.record_id.0,
            owner_id: fp.owner_id,
            bits: hex::encode(fp.bits.to_bytes()),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fingerprints<R: Read>(input: R) -> Result<(FingerprintHeader, Vec<Fingerprint>)> {
    let mut input = BufReader::new(input);
    let mut first = String::new();
    input.read_line(&mut first)?;
    let header = FingerprintHeader::parse(&first)?;
    let mut r = csv::Reader::from_reader(input);
    let mut fps = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        let bytes = hex::decode(&row.bits)
            .map_err(|e| Error::Schema(format!("record {}: {e}", row.record_id)))?;
        let bits = BitArray::from_bytes(header.l, &bytes)?;
        fps.push(Fingerprint::from_bits(RecordId(row.record_id), row.owner_id, bits));
    }
    Ok((header, fps))
}

pub fn write_fingerprints_file(
    header: &FingerprintHeader,
    fps: &[Fingerprint],
    path: impl AsRef<Path>,
) -> Result<()> {
    write_fingerprints(header, fps, std::fs::File::create(path)?)
}

pub fn read_fingerprints_file(path: impl AsRef<Path>) -> Result<(FingerprintHeader, Vec<Fingerprint>)> {
    read_fingerprints(std::fs::File::open(path)?)
}
