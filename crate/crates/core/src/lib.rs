//! Replay-memory library built around a dual memory structure: a large
//! time-ordered main buffer feeding a small prioritized cache.
//!
//! New experience always lands in the main memory. At every training step a
//! time-stratified selection of `t` old transitions plus the `n` transitions
//! gathered since the last training step are copied into the cache; when the
//! cache lacks room, low-priority entries are stochastically evicted first
//! (PSMM). Training minibatches are drawn from the cache with prioritized
//! experience replay (PER). Because priorities are maintained only over the
//! small cache, per-step memory-management cost is independent of the main
//! buffer size.
//!
//! The crate also ships the two single-buffer baselines (PER-only and
//! PSMM-only), a hand-rolled DQN agent, two desk-scale environments, and an
//! experiment harness that emits CSV metrics — everything needed to run the
//! three-way comparison end to end.

pub mod agent;
pub mod dual_memory;
pub mod envs;
pub mod harness;
pub mod priority;
pub mod replay_core;

mod seeding;

pub use seeding::{derive_seed, seeded_rng};

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient data for stratification: have {have}, need {need}")]
    InsufficientData { have: usize, need: usize },

    #[error("invalid subset count: {0}")]
    InvalidSubsetCount(usize),

    #[error("non-finite TD error")]
    NonFiniteTdError,

    #[error("leaf index {index} out of range for {capacity} leaves")]
    LeafOutOfRange { index: usize, capacity: usize },

    #[error("invalid priority value {0}: must be finite and non-negative")]
    InvalidPriority(f64),

    #[error("non-positive priority at index {0}")]
    NonPositivePriority(usize),

    #[error("prefix value {value} outside [0, {total})")]
    PrefixOutOfRange { value: f64, total: f64 },

    #[error("empty priority mass")]
    EmptyPriorityMass,

    #[error("removal count {k} exceeds item count {len}")]
    RemovalCount { k: usize, len: usize },

    #[error("warm-up incomplete: have {have} items, need {need}")]
    WarmupIncomplete { have: usize, need: usize },

    #[error("training cadence violated: {pending} pending transitions, expected {expected}")]
    CadenceViolated { pending: usize, expected: usize },

    #[error("handle invalidated by eviction")]
    StaleHandle,

    #[error("operation requires {required} mode, memory is in {actual} mode")]
    WrongMode {
        required: &'static str,
        actual: &'static str,
    },

    #[error("cache memory is full")]
    CacheFull,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} handles vs {right} TD errors")]
    LengthMismatch { left: usize, right: usize },

    #[error("episode finished")]
    EpisodeFinished,

    #[error("diverged: non-finite loss")]
    Diverged,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid weight file: {0}")]
    InvalidWeightFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
