//! FIFO memory bank of stale embeddings used as negatives.

use crate::error::{Error, Result};
use std::collections::HashMap;

#[derive(Debug, Clone)]
struct BankSlot {
    sample_index: usize,
    embedding: Vec<f64>,
    difficulty: f64,
}

/// Fixed-capacity ring of `(sample index, embedding, difficulty)` entries.
///
/// A sample already present is refreshed in place; otherwise the write
/// cursor advances and the oldest slot is evicted. Lookups only ever see
/// slots that have been written.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    capacity: usize,
    slots: Vec<Option<BankSlot>>,
    cursor: usize,
    by_sample: HashMap<usize, usize>,
}

impl MemoryBank {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("capacity", "must be >= 1"));
        }
        Ok(MemoryBank {
            capacity,
            slots: vec![None; capacity],
            cursor: 0,
            by_sample: HashMap::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of occupied slots; never exceeds the capacity.
    pub fn len(&self) -> usize {
        self.by_sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_sample.is_empty()
    }

    pub fn insert(&mut self, sample_index: usize, embedding: Vec<f64>, difficulty: f64) {
        if let Some(&slot) = self.by_sample.get(&sample_index) {
            self.slots[slot] = Some(BankSlot {
                sample_index,
                embedding,
                difficulty,
            });
            return;
        }
        if let Some(evicted) = &self.slots[self.cursor] {
            self.by_sample.remove(&evicted.sample_index);
        }
        self.slots[self.cursor] = Some(BankSlot {
            sample_index,
            embedding,
            difficulty,
        });
        self.by_sample.insert(sample_index, self.cursor);
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Stale embedding and difficulty for a sample, if still resident.
    pub fn get(&self, sample_index: usize) -> Option<(&[f64], f64)> {
        self.by_sample.get(&sample_index).and_then(|&slot| {
            self.slots[slot]
                .as_ref()
                .map(|s| (s.embedding.as_slice(), s.difficulty))
        })
    }
}
