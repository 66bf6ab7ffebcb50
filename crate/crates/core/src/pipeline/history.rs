//! Fixed-horizon history of per-step records.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub t: f64,
    /// Network input at this step.
    pub z: Vec<f64>,
    /// Base rate (kinematic model or simulator stream).
    pub base: [f64; 3],
    /// Observed reference rate.
    pub reference: [f64; 3],
}

/// Immutable, time-ordered copy of the buffer contents.
#[derive(Debug, Clone)]
pub struct HistorySnapshot {
    records: Arc<[HistoryRecord]>,
    capacity: usize,
}

impl HistorySnapshot {
    pub fn records(&self) -> &[HistoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn ensure_full(&self) -> Result<()> {
        if self.records.len() < self.capacity {
            return Err(Error::HistoryNotFull {
                have: self.records.len(),
                need: self.capacity,
            });
        }
        Ok(())
    }

    pub fn last_t(&self) -> Option<f64> {
        self.records.last().map(|r| r.t)
    }
}

/// Ring of the last `N` records; single writer.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    ring: VecDeque<HistoryRecord>,
    capacity: usize,
}

impl HistoryBuffer {
    pub fn new(horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon", "must be >= 1"));
        }
        Ok(HistoryBuffer {
            ring: VecDeque::with_capacity(horizon),
            capacity: horizon,
        })
    }

    pub fn push(&mut self, record: HistoryRecord) -> Result<()> {
        if let Some(last) = self.ring.back() {
            if !(record.t > last.t) {
                return Err(Error::invalid(
                    "history",
                    format!("records must be time-ordered ({} after {})", record.t, last.t),
                ));
            }
        }
        if self.ring.len() == self.capacity {
            self.ring.pop_front();
        }
        self.ring.push_back(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.ring.len() == self.capacity
    }

    pub fn snapshot(&self) -> HistorySnapshot {
        HistorySnapshot {
            records: self.ring.iter().cloned().collect(),
            capacity: self.capacity,
        }
    }
}
