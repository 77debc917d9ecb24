use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::reward::{similarity_term, target_at};
use crate::env::{Action, CellKey, Snapshot};

/// Two fitness values closer than this count as equal.
pub const FITNESS_TOLERANCE: f64 = 1e-12;

/// Actions from reset plus the per-window behavior and experience traces
/// they produced, with running similarity sums against the persona targets.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub actions: Vec<Action>,
    /// Score so far / 16, per window.
    pub h_b: Vec<f64>,
    /// Estimated arousal per window.
    pub h_e: Vec<f64>,
    sum_b: f64,
    sum_e: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Appends one window and extends the running sums against the targets
    /// (`None` skips a term, leaving its sum at 0).
    pub fn push(
        &mut self,
        action: Action,
        h_b: f64,
        h_e: f64,
        target_b: Option<&[f64]>,
        target_e: Option<&[f64]>,
    ) {
        let i = self.actions.len();
        self.actions.push(action);
        self.h_b.push(h_b);
        self.h_e.push(h_e);
        if let Some(t) = target_b {
            self.sum_b += similarity_term(h_b, target_at(t, i));
        }
        if let Some(t) = target_e {
            self.sum_e += similarity_term(h_e, target_at(t, i));
        }
    }

    /// Behavior reward over the windows so far; 0 for an empty trajectory.
    pub fn r_b(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.sum_b / self.len() as f64
        }
    }

    pub fn r_e(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.sum_e / self.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry {
    pub key: CellKey,
    pub trajectory: Trajectory,
    pub snapshot: Snapshot,
    pub r_b: f64,
    pub r_e: f64,
    /// The value the archive optimizes: the blended reward, or score / 16
    /// in winner mode.
    pub fitness: f64,
    pub raw_score: u8,
    pub finished: bool,
    pub discovered: u64,
    pub updated: u64,
}

/// What [`Archive::offer`] did with a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Offer {
    Inserted,
    Replaced,
    /// Replaced an equal-fitness entry with a shorter trajectory.
    Shortened,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ArchiveCounters {
    pub iterations: u64,
    pub candidates: u64,
    pub inserted: u64,
    pub replaced: u64,
    pub shortened: u64,
    /// Replacements whose stored fitness went down (only possible within the
    /// equality tolerance).
    pub decreases: u64,
}

/// Cell archive; entries keep insertion order so uniform selection by index
/// is reproducible.
#[derive(Debug, Clone, Default)]
pub struct Archive {
    entries: Vec<ArchiveEntry>,
    index: HashMap<CellKey, usize>,
    pub counters: ArchiveCounters,
}

/// Whether a candidate with `fitness` and trajectory length `len` should take
/// the place of `current`.
pub fn improves(current: &ArchiveEntry, fitness: f64, len: usize) -> Offer {
    if fitness > current.fitness {
        Offer::Replaced
    } else if (fitness - current.fitness).abs() <= FITNESS_TOLERANCE && len < current.trajectory.len() {
        Offer::Shortened
    } else {
        Offer::Rejected
    }
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn get(&self, key: &CellKey) -> Option<&ArchiveEntry> {
        self.index.get(key).map(|&i| &self.entries[i])
    }

    pub fn entry(&self, i: usize) -> &ArchiveEntry {
        &self.entries[i]
    }

    /// Outcome `offer` would have, without building the entry.
    pub fn check(&self, key: &CellKey, fitness: f64, len: usize) -> Offer {
        match self.index.get(key) {
            None => Offer::Inserted,
            Some(&i) => improves(&self.entries[i], fitness, len),
        }
    }

    /// Like [`offer`](Self::offer), but only builds the entry when it will be
    /// stored.
    pub fn offer_with(
        &mut self,
        key: CellKey,
        fitness: f64,
        len: usize,
        build: impl FnOnce() -> ArchiveEntry,
    ) -> Offer {
        if self.check(&key, fitness, len) == Offer::Rejected {
            self.counters.candidates += 1;
            return Offer::Rejected;
        }
        self.offer(build())
    }

    /// Applies the replacement rules to `candidate`.
    pub fn offer(&mut self, candidate: ArchiveEntry) -> Offer {
        self.counters.candidates += 1;
        let key = candidate.key;
        let Some(&i) = self.index.get(&key) else {
            self.index.insert(key, self.entries.len());
            self.entries.push(candidate);
            self.counters.inserted += 1;
            return Offer::Inserted;
        };
        let current = &self.entries[i];
        let outcome = improves(current, candidate.fitness, candidate.trajectory.len());
        match outcome {
            Offer::Replaced => {
                assert!(candidate.fitness > current.fitness, "archive fitness decreased");
                self.counters.replaced += 1;
            }
            Offer::Shortened => {
                assert!(
                    candidate.fitness >= current.fitness - FITNESS_TOLERANCE,
                    "archive fitness decreased beyond tolerance"
                );
                assert!(
                    candidate.trajectory.len() < current.trajectory.len(),
                    "equal-fitness replacement must shorten the trajectory"
                );
                if candidate.fitness < current.fitness {
                    self.counters.decreases += 1;
                }
                self.counters.shortened += 1;
            }
            _ => return Offer::Rejected,
        }
        let discovered = current.discovered;
        self.entries[i] = ArchiveEntry { discovered, ..candidate };
        outcome
    }
}
