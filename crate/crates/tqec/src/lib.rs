//! Toric-code quantum error correction laboratory.
//!
//! The crate simulates the distance-`d` toric code under biased Pauli noise
//! and compares two decoding stacks on equal footing:
//!
//! * a minimum-weight perfect-matching (MWPM) baseline with an exact
//!   blossom matcher, and
//! * a learned two-level decoder — a self-attention U-Net that proposes
//!   per-qubit recoveries, applied iteratively until the syndrome clears,
//!   plus a second network that predicts the residual logical class.
//!
//! Modules build on each other roughly bottom-up: [`toric`] fixes lattice
//! geometry and Pauli algebra, [`noise`] samples error patterns, [`mapping`]
//! moves between frames and `(2, d, d)` tensors, [`mwpm`] implements the
//! matching decoder, [`autodiff`] is a minimal reverse-mode tensor engine,
//! [`sunet`] assembles the networks, [`pipeline`] runs iterative decoding
//! and sample labeling, and [`lab`] provides datasets, training loops, and
//! Monte-Carlo evaluation of logical error rates and thresholds.

pub mod autodiff;
pub mod lab;
pub mod mapping;
pub mod mwpm;
pub mod noise;
pub mod pipeline;
pub mod sunet;
pub mod toric;

use std::sync::atomic::{AtomicBool, Ordering};

static DETERMINISTIC: AtomicBool = AtomicBool::new(false);

/// Force all internally parallel code paths onto a single thread.
///
/// Parallel reductions in this crate are already order-fixed, so results
/// do not depend on thread count; the switch exists so reproducibility
/// audits can rule out scheduling effects entirely.
pub fn set_deterministic(on: bool) {
    DETERMINISTIC.store(on, Ordering::SeqCst);
}

/// Whether single-threaded execution was requested.
pub fn deterministic() -> bool {
    DETERMINISTIC.load(Ordering::SeqCst)
}
