//! Transition records, the time-ordered main memory, and time-stratified
//! selection of cache candidates.
//!
//! The main memory is a plain FIFO ring: it carries no priorities and its
//! logical order is insertion-time order, oldest first. Cache candidates are
//! chosen by partitioning the filled prefix into `t` contiguous time ranges
//! and drawing one transition uniformly from each, so the copied set spans
//! the full stored history.

use std::ops::Range;

use rand::{Rng, RngExt};

use crate::{Error, Result};

/// One unit of experience.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

impl Transition {
    pub fn new(
        state: Vec<f64>,
        action: usize,
        reward: f64,
        next_state: Vec<f64>,
        terminal: bool,
    ) -> Self {
        debug_assert_eq!(state.len(), next_state.len());
        Self {
            state,
            action,
            reward,
            next_state,
            terminal,
        }
    }
}

/// Fixed-capacity ring buffer of transitions in insertion-time order.
///
/// Logical index 0 is the oldest stored transition. Once full, each push
/// overwrites exactly the oldest element.
#[derive(Debug, Clone)]
pub struct MainMemory {
    capacity: usize,
    slots: Vec<Transition>,
    cursor: usize,
}

impl MainMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "main memory capacity must be positive");
        Self {
            capacity,
            slots: Vec::with_capacity(capacity),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn count(&self) -> usize {
        self.slots.len()
    }

    pub fn is_full(&self) -> bool {
        self.slots.len() == self.capacity
    }

    /// Append a transition, overwriting the oldest once full.
    pub fn push(&mut self, tr: Transition) {
        if self.slots.len() < self.capacity {
            self.slots.push(tr);
        } else {
            self.slots[self.cursor] = tr;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// Transition at logical index `i` (0 = oldest, `count()-1` = newest).
    pub fn get(&self, i: usize) -> &Transition {
        assert!(i < self.slots.len(), "logical index {i} out of range");
        if self.slots.len() < self.capacity {
            &self.slots[i]
        } else {
            &self.slots[(self.cursor + i) % self.capacity]
        }
    }

    /// Iterate transitions oldest-first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        (0..self.count()).map(move |i| self.get(i))
    }

    /// Draw one transition uniformly from each of the `t` time ranges.
    ///
    /// Returned items are copies; the buffer is unmodified.
    pub fn sample_time_stratified<R: Rng>(&self, t: usize, rng: &mut R) -> Result<Vec<Transition>> {
        let indices = stratified_indices(self.count(), t, rng)?;
        Ok(indices.into_iter().map(|i| self.get(i).clone()).collect())
    }
}

/// Partition logical indices `0..count` into `t` contiguous, disjoint,
/// covering ranges in time order, sizes differing by at most one.
///
/// When `t` divides `count`, range `j` is exactly
/// `[j*count/t, (j+1)*count/t)`.
pub fn subset_bounds(count: usize, t: usize) -> Result<Vec<Range<usize>>> {
    if t == 0 {
        return Err(Error::InvalidSubsetCount(t));
    }
    if t > count {
        return Err(Error::InsufficientData {
            have: count,
            need: t,
        });
    }
    Ok((0..t)
        .map(|j| (j * count / t)..((j + 1) * count / t))
        .collect())
}

/// One uniform index from each range of `subset_bounds(count, t)`.
pub fn stratified_indices<R: Rng>(count: usize, t: usize, rng: &mut R) -> Result<Vec<usize>> {
    let bounds = subset_bounds(count, t)?;
    let indices: Vec<usize> = bounds.iter().map(|r| rng.random_range(r.clone())).collect();
    debug_assert!(indices
        .iter()
        .zip(bounds.iter())
        .all(|(i, r)| r.contains(i)));
    Ok(indices)
}
