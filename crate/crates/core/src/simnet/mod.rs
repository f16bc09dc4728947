//! Deterministic discrete-event simulation of packet dissemination.
//!
//! One run is a single-threaded event loop over a unit-disk topology with a
//! constructive-interference reception model: concurrent transmissions of a
//! bit-identical frame decode when their start offsets spread less than the
//! 0.5 µs alignment threshold and a per-byte corruption draw passes.
//! Everything is a pure function of (topology, params, packets, seed);
//! replays are bit-identical.

pub mod engine;
pub mod metrics;
pub mod radio;
pub mod topology;

pub use engine::{run_dissemination, NodeOutcome, RunResult};
pub use metrics::{compute_metrics, LatencyStats, Metrics};
pub use radio::{ci_reception, draw_jitter, RadioParams, TxObservation, DELTA_CI_NS};
pub use topology::{build_topology, Topology, TopologySpec};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("topology stayed disconnected after {retries} regenerations")]
    Disconnected { retries: u32 },
    #[error("event budget of {budget} exceeded; runaway simulation")]
    EventBudgetExceeded { budget: u64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("simulation invariant violated: {0}")]
    InvariantViolation(String),
    #[error("no run results to aggregate")]
    EmptyInput,
    #[error(transparent)]
    Protocol(#[from] crate::protocol::Error),
    #[error(transparent)]
    Framing(#[from] crate::framing::Error),
}
