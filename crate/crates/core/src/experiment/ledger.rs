use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{ExperimentError, PlayerKind, StrategyWhen, TrialPhase};
use crate::network::{NodeId, Trajectory};

/// Everything that can happen to a seat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SeatFilled {
        kind: PlayerKind,
        machine: Option<u64>,
    },
    CandidatesDrawn {
        candidates: Vec<usize>,
    },
    DemonstratorSelected {
        demonstrator: usize,
    },
    Trial {
        phase: TrialPhase,
        index: usize,
        trajectory: Trajectory,
    },
    /// One repeat trial: the learner's attempted moves and its point tally.
    Repeat {
        index: usize,
        network_id: String,
        attempts: Vec<NodeId>,
        points: i32,
    },
    Strategy {
        when: StrategyWhen,
        text: String,
    },
    StrategyFlag {
        flag: bool,
    },
    SeatCompleted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub seq: u64,
    pub population: String,
    pub generation: usize,
    pub seat: usize,
    #[serde(flatten)]
    pub event: Event,
}

/// Append-only event log of one population with monotone sequence numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    population: String,
    entries: Vec<LedgerEntry>,
}

impl Ledger {
    pub fn new(population: impl Into<String>) -> Self {
        Ledger { population: population.into(), entries: Vec::new() }
    }

    pub fn append(&mut self, generation: usize, seat: usize, event: Event) -> &LedgerEntry {
        let seq = self.entries.len() as u64;
        self.entries.push(LedgerEntry { seq, population: self.population.clone(), generation, seat, event });
        self.entries.last().expect("just pushed")
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// One JSON record per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Parses records written by [`Ledger::write_jsonl`], checking that
    /// sequence numbers run 0, 1, 2, ...
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<LedgerEntry>, ExperimentError> {
        let mut out: Vec<LedgerEntry> = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| ExperimentError::CorruptLedger(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: LedgerEntry =
                serde_json::from_str(&line).map_err(|e| ExperimentError::CorruptLedger(format!("line {}: {e}", n + 1)))?;
            let expected = out.iter().filter(|x| x.population == e.population).count() as u64;
            if e.seq != expected {
                return Err(ExperimentError::CorruptLedger(format!("line {}: sequence {} where {expected} was due", n + 1, e.seq)));
            }
            out.push(e);
        }
        Ok(out)
    }
}
