//! Time-slotted simulator for cooperative edge caching at fog access points.
//!
//! A cloud server holds a library of `F` equally sized files. `N` fog access
//! points (F-APs), each with room for `S` files, serve users whose requests
//! follow per-user Zipf preferences over a random permutation of the library.
//! A request is answered from the local cache, from a connected F-AP, or from
//! the cloud over the backhaul, with increasing delay.
//!
//! Four cache-replacement schemes run side by side on identical request and
//! channel realizations:
//!
//! * `marl` — per-F-AP double deep Q-networks coupled through a global reward
//!   and counter-scaled targets exchanged between neighbors,
//! * `dqn`  — independent DQN agents with local rewards,
//! * `iql`  — independent tabular Q-learning,
//! * `lru`  — least-recently-used replacement.
//!
//! The [`harness`] module loads configs, drives seeded experiments, and emits
//! per-slot CSV metrics; the remaining modules hold the building blocks.

pub mod agent;
pub mod baselines;
pub mod harness;
pub mod marl;
pub mod neural;
pub mod popularity;
pub mod radio;
pub mod topology;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration value or combination.
    #[error("config error: {0}")]
    Config(String),

    /// An argument outside its documented domain (file id, slot index, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector/matrix dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// A transmission rate of zero or below where a positive rate is required.
    #[error("nonpositive rate: {0}")]
    NonpositiveRate(String),

    /// A non-finite value fed into training.
    #[error("training error: {0}")]
    Training(String),

    /// An action would duplicate a file within one cache.
    #[error("duplicate cache entry: {0}")]
    DuplicateCache(String),

    /// A tabular learner outgrew its configured table cap.
    #[error("table capacity exceeded: {0}")]
    Capacity(String),

    /// A popularity query against an F-AP with no served users.
    #[error("empty region: {0}")]
    EmptyRegion(String),

    /// Malformed checkpoint or metrics file.
    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
