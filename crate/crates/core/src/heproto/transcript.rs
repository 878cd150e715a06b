//! The host's complete view of a run.

use std::io;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::RecordId;
use crate::error::Result;

use super::backend::CiphertextHandle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    DocFreqJoin,
    RankAssignment,
    Probe,
    Verify,
    Baseline,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::DocFreqJoin,
        Phase::RankAssignment,
        Phase::Probe,
        Phase::Verify,
        Phase::Baseline,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    HandleArrival {
        handle: CiphertextHandle,
        record: RecordId,
        owner: usize,
    },
    RecordLength {
        record: RecordId,
        owner: usize,
        length: usize,
    },
    OrderingArrival {
        handle: CiphertextHandle,
        owner: usize,
        doc_freq: usize,
    },
    IsMatch {
        phase: Phase,
        a: CiphertextHandle,
        b: CiphertextHandle,
        masked: u64,
        result: bool,
    },
    Emit {
        a: RecordId,
        b: RecordId,
    },
    Counter {
        name: String,
        value: u64,
    },
    BackendNote {
        text: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptMode {
    #[default]
    Full,
    /// Per-phase counters only; for runs whose full log would not fit in
    /// memory.
    CountersOnly,
}

/// Per-phase is_match counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCounts {
    pub doc_freq_join: u64,
    pub rank_assignment: u64,
    pub probe: u64,
    pub verify: u64,
    pub baseline: u64,
}

impl QueryCounts {
    pub fn get(&self, phase: Phase) -> u64 {
        match phase {
            Phase::DocFreqJoin => self.doc_freq_join,
            Phase::RankAssignment => self.rank_assignment,
            Phase::Probe => self.probe,
            Phase::Verify => self.verify,
            Phase::Baseline => self.baseline,
        }
    }

    /// Queries spent by the protocol itself, excluding the baseline.
    pub fn protocol_total(&self) -> u64 {
        self.doc_freq_join + self.rank_assignment + self.probe + self.verify
    }

    /// Queries after global pre-processing.
    pub fn join_total(&self) -> u64 {
        self.probe + self.verify
    }
}

/// Append-only log with a total order assigned at append time.
#[derive(Debug, Default)]
pub struct Transcript {
    mode: TranscriptMode,
    events: Mutex<Vec<Event>>,
    queries: [AtomicU64; 5],
}

impl Transcript {
    pub fn new(mode: TranscriptMode) -> Self {
        Transcript {
            mode,
            ..Default::default()
        }
    }

    pub fn mode(&self) -> TranscriptMode {
        self.mode
    }

    pub fn record(&self, kind: EventKind) {
        if let EventKind::IsMatch { phase, .. } = kind {
            self.queries[phase.index()].fetch_add(1, Ordering::Relaxed);
        }
        if self.mode == TranscriptMode::Full || matches!(kind, EventKind::BackendNote { .. }) {
            let mut events = self.events.lock().expect("transcript poisoned");
            let seq = events.len() as u64;
            events.push(Event { seq, kind });
        }
    }

    pub fn queries(&self) -> QueryCounts {
        let q = |p: Phase| self.queries[p.index()].load(Ordering::Relaxed);
        QueryCounts {
            doc_freq_join: q(Phase::DocFreqJoin),
            rank_assignment: q(Phase::RankAssignment),
            probe: q(Phase::Probe),
            verify: q(Phase::Verify),
            baseline: q(Phase::Baseline),
        }
    }

    /// Logs the per-phase counters as events.
    pub fn seal(&self) {
        let q = self.queries();
        for phase in Phase::ALL {
            let name = serde_json::to_value(phase)
                .ok()
                .and_then(|v| v.as_str().map(|s| format!("is_match.{s}")))
                .unwrap_or_default();
            self.record(EventKind::Counter {
                name,
                value: q.get(phase),
            });
        }
    }

    pub fn events(&self) -> Vec<Event> {
        self.events.lock().expect("transcript poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.events.lock().expect("transcript poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One JSON object per line.
    pub fn write_ndjson<W: io::Write>(&self, mut out: W) -> Result<()> {
        for e in self.events.lock().expect("transcript poisoned").iter() {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_ndjson<R: io::BufRead>(input: R) -> Result<Vec<Event>> {
        let mut out = Vec::new();
        for line in input.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line)?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(id: u64) -> CiphertextHandle {
        CiphertextHandle { id, tag: 1 }
    }

    #[test]
    fn ndjson_round_trip_and_sequence() {
        let t = Transcript::new(TranscriptMode::Full);
        t.record(EventKind::RecordLength { record: RecordId(3), owner: 1, length: 9 });
        t.record(EventKind::IsMatch { phase: Phase::Probe, a: h(1), b: h(2), masked: 0, result: true });
        t.seal();
        let mut buf = Vec::new();
        t.write_ndjson(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().contains("\"event\":\"record_length\""));
        let back = Transcript::read_ndjson(&buf[..]).unwrap();
        assert_eq!(back, t.events());
        assert!(back.iter().enumerate().all(|(i, e)| e.seq == i as u64));
        assert_eq!(t.queries().probe, 1);
    }

    #[test]
    fn counters_only_mode_keeps_counts() {
        let t = Transcript::new(TranscriptMode::CountersOnly);
        for _ in 0..3 {
            t.record(EventKind::IsMatch { phase: Phase::Baseline, a: h(1), b: h(2), masked: 5, result: false });
        }
        assert!(t.is_empty());
        assert_eq!(t.queries().baseline, 3);
        assert_eq!(t.queries().protocol_total(), 0);
    }

    #[test]
    fn concurrent_appends_get_a_total_order() {
        let t = Transcript::new(TranscriptMode::Full);
        std::thread::scope(|s| {
            for i in 0..4 {
                let t = &t;
                s.spawn(move || {
                    for j in 0..250 {
                        t.record(EventKind::Emit { a: RecordId(i), b: RecordId(j) });
                    }
                });
            }
        });
        let seqs: Vec<u64> = t.events().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, (0..1000).collect::<Vec<_>>());
    }
}
