//! Differential reprogramming toolkit for constructive-interference networks.
//!
//! The crate is organized around the update pipeline:
//!
//! * [`patchgen`] — symbol-level firmware image model with a move-free
//!   section layout, minimal diff/apply, run-length compression, and a
//!   file-backed version store.
//! * [`framing`] — byte-exact packet encoding and fragmentation of a patch
//!   object into fixed-size payloads.
//! * [`protocol`] — the pure per-node flood state machine (repeat-bounded
//!   relaying, round sequencing, completion detection).
//! * [`simnet`] — deterministic discrete-event simulator with unit-disk
//!   topologies and a constructive-interference reception model, plus
//!   reliability/latency metrics.

pub mod framing;
pub mod patchgen;
pub mod protocol;
pub mod simnet;
