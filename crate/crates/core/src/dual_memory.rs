//! The dual memory structure and its two single-buffer baselines.
//!
//! Data flow in dual mode: every interaction step lands in the main memory
//! and on a pending list; at each training step the cache is refreshed by
//! evicting just enough low-priority entries (PSMM) to fit `t` stratified
//! copies from the main memory plus the `n` pending transitions, and
//! minibatches are then PER-sampled from the cache. Priorities are computed
//! only over the cache, so refresh cost depends on the cache size, `t` and
//! `n` — never on the main capacity.
//!
//! Baselines share the machinery: `SinglePer` is one buffer with FIFO
//! eviction and PER sampling, `SinglePsmm` is one buffer with PSMM eviction
//! and uniform sampling.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngExt};

use crate::priority::{
    per_sample, priority_from_td, psmm_select_removals, MaxTree, PriorityParams, SumTree,
};
use crate::replay_core::{MainMemory, Transition};
use crate::{Error, Result};

/// Which memory structure a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryMode {
    /// Single buffer, FIFO eviction, PER sampling.
    SinglePer,
    /// Single buffer, PSMM eviction, uniform sampling.
    SinglePsmm,
    /// Main memory + prioritized cache (PER sampling, PSMM eviction).
    DualDms,
}

impl MemoryMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MemoryMode::SinglePer => "per",
            MemoryMode::SinglePsmm => "psmm",
            MemoryMode::DualDms => "dms",
        }
    }

    pub const ALL: [MemoryMode; 3] = [
        MemoryMode::SinglePer,
        MemoryMode::SinglePsmm,
        MemoryMode::DualDms,
    ];
}

impl fmt::Display for MemoryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MemoryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "per" => Ok(MemoryMode::SinglePer),
            "psmm" => Ok(MemoryMode::SinglePsmm),
            "dms" => Ok(MemoryMode::DualDms),
            other => Err(Error::InvalidConfig(format!(
                "unknown memory mode '{other}' (expected per, psmm, or dms)"
            ))),
        }
    }
}

/// Capacities and refresh cadence for one memory configuration.
#[derive(Debug, Clone, Copy)]
pub struct MemoryPolicy {
    pub mode: MemoryMode,
    /// Stratified copies per refresh.
    pub t: usize,
    /// Environment steps per training step (= fresh transitions per refresh).
    pub n: usize,
    pub main_capacity: usize,
    /// Dual mode only; single modes use `main_capacity` alone.
    pub cache_capacity: usize,
}

impl MemoryPolicy {
    pub fn dual(main_capacity: usize, cache_capacity: usize, t: usize, n: usize) -> Self {
        Self {
            mode: MemoryMode::DualDms,
            t,
            n,
            main_capacity,
            cache_capacity,
        }
    }

    pub fn single_per(capacity: usize) -> Self {
        Self {
            mode: MemoryMode::SinglePer,
            t: 1,
            n: 1,
            main_capacity: capacity,
            cache_capacity: 0,
        }
    }

    pub fn single_psmm(capacity: usize) -> Self {
        Self {
            mode: MemoryMode::SinglePsmm,
            t: 1,
            n: 1,
            main_capacity: capacity,
            cache_capacity: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.main_capacity == 0 {
            return Err(Error::InvalidConfig(
                "main_capacity must be positive".into(),
            ));
        }
        if self.t == 0 || self.n == 0 {
            return Err(Error::InvalidConfig("t and n must be positive".into()));
        }
        if self.mode == MemoryMode::DualDms {
            if self.cache_capacity < self.t + self.n {
                return Err(Error::InvalidConfig(format!(
                    "cache_capacity {} cannot hold one refresh of t+n = {}",
                    self.cache_capacity,
                    self.t + self.n
                )));
            }
            if self.main_capacity < self.t {
                return Err(Error::InvalidConfig(format!(
                    "main_capacity {} smaller than t = {}",
                    self.main_capacity, self.t
                )));
            }
        }
        Ok(())
    }
}

/// Identifies a sampled entry for priority write-back. Valid until the next
/// eviction or refresh touches that slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntryHandle {
    slot: usize,
    generation: u64,
}

/// What one cache refresh did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefreshReport {
    pub evicted: usize,
    pub copied: usize,
    pub cache_count_before: usize,
    pub cache_count: usize,
}

struct CacheEntry {
    transition: Transition,
    priority: f64,
}

/// Fixed-capacity slot store pairing transitions with priorities, indexed by
/// a sum tree (sampling) and a max tree (initial-priority queries).
///
/// Occupied slots always hold a positive priority; free slots hold leaf 0.
pub struct CacheMemory {
    capacity: usize,
    slots: Vec<Option<CacheEntry>>,
    free: Vec<usize>,
    generations: Vec<u64>,
    tree: SumTree,
    max_tree: MaxTree,
}

impl CacheMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "cache capacity must be positive");
        Self {
            capacity,
            slots: (0..capacity).map(|_| None).collect(),
            free: (0..capacity).rev().collect(),
            generations: vec![0; capacity],
            tree: SumTree::new(capacity),
            max_tree: MaxTree::new(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn count(&self) -> usize {
        self.capacity - self.free.len()
    }

    pub fn is_full(&self) -> bool {
        self.free.is_empty()
    }

    pub fn free_space(&self) -> usize {
        self.free.len()
    }

    /// Max priority over occupied slots; `None` when empty.
    pub fn max_priority(&self) -> Option<f64> {
        if self.count() == 0 {
            None
        } else {
            Some(self.max_tree.max())
        }
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn transition(&self, slot: usize) -> Option<&Transition> {
        self.slots[slot].as_ref().map(|e| &e.transition)
    }

    pub fn priority(&self, slot: usize) -> Option<f64> {
        self.slots[slot].as_ref().map(|e| e.priority)
    }

    pub fn generation(&self, slot: usize) -> u64 {
        self.generations[slot]
    }

    /// Occupied slot ids with their priorities, in slot order.
    pub fn occupied(&self) -> (Vec<usize>, Vec<f64>) {
        let mut ids = Vec::with_capacity(self.count());
        let mut priorities = Vec::with_capacity(self.count());
        for (slot, entry) in self.slots.iter().enumerate() {
            if let Some(e) = entry {
                ids.push(slot);
                priorities.push(e.priority);
            }
        }
        (ids, priorities)
    }

    pub fn insert(&mut self, transition: Transition, priority: f64) -> Result<EntryHandle> {
        if !priority.is_finite() || priority <= 0.0 {
            return Err(Error::InvalidPriority(priority));
        }
        let slot = self.free.pop().ok_or(Error::CacheFull)?;
        self.generations[slot] += 1;
        self.slots[slot] = Some(CacheEntry {
            transition,
            priority,
        });
        self.tree.update(slot, priority)?;
        self.max_tree.update(slot, priority)?;
        Ok(EntryHandle {
            slot,
            generation: self.generations[slot],
        })
    }

    pub fn evict(&mut self, slot: usize) {
        assert!(self.slots[slot].is_some(), "evicting an empty slot");
        self.slots[slot] = None;
        self.generations[slot] += 1;
        self.tree.update(slot, 0.0).expect("slot in range");
        self.max_tree.update(slot, 0.0).expect("slot in range");
        self.free.push(slot);
    }

    pub fn set_priority(&mut self, slot: usize, priority: f64) -> Result<()> {
        if !priority.is_finite() || priority <= 0.0 {
            return Err(Error::InvalidPriority(priority));
        }
        match self.slots[slot].as_mut() {
            Some(entry) => entry.priority = priority,
            None => return Err(Error::StaleHandle),
        }
        self.tree.update(slot, priority)?;
        self.max_tree.update(slot, priority)?;
        Ok(())
    }
}

/// Replay memory in one of the three structures, driving ingest, cache
/// refresh, minibatch sampling, and priority write-back.
pub struct ReplayMemory {
    policy: MemoryPolicy,
    params: PriorityParams,
    /// Dual mode only.
    main: Option<MainMemory>,
    /// The prioritized store: the cache in dual mode, the whole buffer in
    /// single modes.
    store: CacheMemory,
    /// Dual mode: transitions gathered since the last refresh.
    pending: Vec<Transition>,
    /// SinglePer: slot ids in insertion order, oldest first.
    fifo: VecDeque<usize>,
}

impl ReplayMemory {
    pub fn new(policy: MemoryPolicy, params: PriorityParams) -> Result<Self> {
        policy.validate()?;
        params.validate()?;
        let (main, store_capacity) = match policy.mode {
            MemoryMode::DualDms => (
                Some(MainMemory::new(policy.main_capacity)),
                policy.cache_capacity,
            ),
            _ => (None, policy.main_capacity),
        };
        Ok(Self {
            policy,
            params,
            main,
            store: CacheMemory::new(store_capacity),
            pending: Vec::new(),
            fifo: VecDeque::new(),
        })
    }

    pub fn policy(&self) -> &MemoryPolicy {
        &self.policy
    }

    pub fn mode(&self) -> MemoryMode {
        self.policy.mode
    }

    /// Count in the main memory (dual) or the single buffer.
    pub fn main_count(&self) -> usize {
        match &self.main {
            Some(main) => main.count(),
            None => self.store.count(),
        }
    }

    /// Count in the cache; 0 in single modes.
    pub fn cache_count(&self) -> usize {
        match self.policy.mode {
            MemoryMode::DualDms => self.store.count(),
            _ => 0,
        }
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Count in the store minibatches are drawn from.
    pub fn trainable_count(&self) -> usize {
        self.store.count()
    }

    /// Priorities of occupied store slots, in slot order.
    pub fn priorities(&self) -> Vec<f64> {
        self.store.occupied().1
    }

    /// Store a fresh transition.
    ///
    /// Dual mode pushes into the main memory and the pending list. SinglePer
    /// FIFO-evicts when full and inserts at the current max priority (1.0 on
    /// an empty buffer). SinglePsmm frees one slot by PSMM when full.
    pub fn ingest<R: Rng>(&mut self, tr: Transition, rng: &mut R) {
        match self.policy.mode {
            MemoryMode::DualDms => {
                self.main
                    .as_mut()
                    .expect("dual mode has a main memory")
                    .push(tr.clone());
                self.pending.push(tr);
            }
            MemoryMode::SinglePer => {
                if self.store.is_full() {
                    let oldest = self.fifo.pop_front().expect("full buffer has entries");
                    self.store.evict(oldest);
                }
                let priority = self.store.max_priority().unwrap_or(1.0);
                let handle = self
                    .store
                    .insert(tr, priority)
                    .expect("slot was just freed");
                self.fifo.push_back(handle.slot);
            }
            MemoryMode::SinglePsmm => {
                if self.store.is_full() {
                    let (ids, priorities) = self.store.occupied();
                    let removed =
                        psmm_select_removals(&priorities, 1, self.params.alpha_remove, rng)
                            .expect("k=1 over a full buffer");
                    self.store.evict(ids[removed[0]]);
                }
                let priority = self.store.max_priority().unwrap_or(1.0);
                self.store
                    .insert(tr, priority)
                    .expect("slot was just freed");
            }
        }
    }

    /// Discard the pending list without refreshing (dual mode).
    ///
    /// Used when a scheduled training step is skipped during warm-up: the
    /// pending transitions already live in the main memory, and the next
    /// refresh must see only the `n` transitions gathered since the last
    /// training opportunity.
    pub fn drop_pending(&mut self) {
        self.pending.clear();
    }

    /// Refresh the cache: PSMM-evict any shortfall, then copy `t` stratified
    /// samples from the main memory plus the `n` pending transitions, all at
    /// the current max cache priority (1.0 on an empty cache).
    pub fn refresh_cache<R: Rng>(&mut self, rng: &mut R) -> Result<RefreshReport> {
        if self.policy.mode != MemoryMode::DualDms {
            return Err(Error::WrongMode {
                required: "dms",
                actual: self.policy.mode.as_str(),
            });
        }
        let main = self.main.as_ref().expect("dual mode has a main memory");
        let (t, n) = (self.policy.t, self.policy.n);
        if main.count() < t {
            return Err(Error::WarmupIncomplete {
                have: main.count(),
                need: t,
            });
        }
        if self.pending.len() != n {
            return Err(Error::CadenceViolated {
                pending: self.pending.len(),
                expected: n,
            });
        }

        let stratified = main.sample_time_stratified(t, rng)?;
        let incoming = t + n;
        let cache_count_before = self.store.count();
        let shortfall = incoming.saturating_sub(self.store.free_space());
        if shortfall > 0 {
            let (ids, priorities) = self.store.occupied();
            let removals =
                psmm_select_removals(&priorities, shortfall, self.params.alpha_remove, rng)?;
            for r in removals {
                self.store.evict(ids[r]);
            }
        }

        let priority = self.store.max_priority().unwrap_or(1.0);
        for tr in stratified.into_iter().chain(self.pending.drain(..)) {
            self.store
                .insert(tr, priority)
                .expect("eviction made room for t+n entries");
        }

        let report = RefreshReport {
            evicted: shortfall,
            copied: incoming,
            cache_count_before,
            cache_count: self.store.count(),
        };
        debug_assert!(report.cache_count <= self.policy.cache_capacity);
        debug_assert_eq!(
            report.cache_count,
            cache_count_before - report.evicted + report.copied
        );
        Ok(report)
    }

    /// Draw a training minibatch.
    ///
    /// PER-sampled with importance weights in dual and SinglePer modes;
    /// uniform with unit weights in SinglePsmm. Handles stay valid until an
    /// eviction or refresh touches their slots.
    pub fn sample_minibatch<R: Rng>(
        &self,
        batch: usize,
        rng: &mut R,
    ) -> Result<(Vec<Transition>, Vec<f64>, Vec<EntryHandle>)> {
        assert!(batch >= 1, "batch must be at least 1");
        if self.store.count() < batch {
            return Err(Error::WarmupIncomplete {
                have: self.store.count(),
                need: batch,
            });
        }
        match self.policy.mode {
            MemoryMode::DualDms | MemoryMode::SinglePer => {
                let (slots, weights) = per_sample(self.store.tree(), batch, self.params.beta, rng)?;
                Ok(self.collect_batch(slots, weights))
            }
            MemoryMode::SinglePsmm => {
                let (ids, _) = self.store.occupied();
                let slots = (0..batch)
                    .map(|_| ids[rng.random_range(0..ids.len())])
                    .collect();
                Ok(self.collect_batch(slots, vec![1.0; batch]))
            }
        }
    }

    fn collect_batch(
        &self,
        slots: Vec<usize>,
        weights: Vec<f64>,
    ) -> (Vec<Transition>, Vec<f64>, Vec<EntryHandle>) {
        let transitions = slots
            .iter()
            .map(|&s| {
                self.store
                    .transition(s)
                    .expect("sampled slot is occupied")
                    .clone()
            })
            .collect();
        let handles = slots
            .iter()
            .map(|&s| EntryHandle {
                slot: s,
                generation: self.store.generation(s),
            })
            .collect();
        (transitions, weights, handles)
    }

    /// Write back priorities `(|delta| + eps)^alpha` for sampled entries.
    ///
    /// Validates every handle and TD error before touching anything, so a
    /// stale handle leaves all priorities unchanged.
    pub fn update_priorities(&mut self, handles: &[EntryHandle], td_errors: &[f64]) -> Result<()> {
        if handles.len() != td_errors.len() {
            return Err(Error::LengthMismatch {
                left: handles.len(),
                right: td_errors.len(),
            });
        }
        let mut priorities = Vec::with_capacity(handles.len());
        for (handle, &delta) in handles.iter().zip(td_errors) {
            if self.store.generation(handle.slot) != handle.generation
                || self.store.transition(handle.slot).is_none()
            {
                return Err(Error::StaleHandle);
            }
            priorities.push(priority_from_td(delta, &self.params)?.powf(self.params.alpha));
        }
        for (handle, priority) in handles.iter().zip(priorities) {
            self.store.set_priority(handle.slot, priority)?;
        }
        debug_assert!(self.store.tree().consistency_error() < 1e-9);
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn store_mut(&mut self) -> &mut CacheMemory {
        &mut self.store
    }
}
