//! Link-level simulation of a single-cell massive-MIMO SC-FDMA uplink that
//! shares its band with a pulsed search radar.
//!
//! The pipeline is split into the same stages a receiver chain would have:
//!
//! * [`scenario`]: static configuration, derived frame timing, noise budget.
//! * [`channel`]: user drops, three-slope path loss, shadowing, block fading.
//! * [`clutter`]: radar code, scatterer scene, closed-form clutter matrices
//!   and covariances, plus a brute-force time-domain oracle.
//! * [`airlink`]: frequency-domain observables for data and training packets.
//! * [`estimation`]: pilot-matched channel estimation.
//! * [`detection`]: channel-matched, clutter zero-forcing, LMMSE and full
//!   zero-forcing receivers.
//! * [`metrics`]: output SINR and its aggregation.
//! * [`montecarlo`]: seeded trials and SINR-vs-CNR sweeps.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod airlink;
pub mod channel;
pub mod clutter;
pub mod detection;
pub mod dft;
mod error;
pub mod estimation;
pub mod linalg;
pub mod metrics;
pub mod montecarlo;
pub mod scenario;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector};
pub use num_complex::Complex64;

pub use channel::UplinkChannelSet;
pub use clutter::{ClutterCovariance, RadarWaveform, ScattererScene};
pub use detection::{NullBasis, ReceiverKind, ReceiverWeights};
pub use estimation::{ChannelEstimate, CsiMode};
pub use metrics::{SinrRecord, TrialSinr};
pub use montecarlo::{SweepPlan, TrialSeed};
pub use scenario::{NoiseBudget, SystemScenario};
