//! Fully distributed joint clock phase and skew synchronization.
//!
//! Nodes exchange time-stamped packets with their neighbors, every link
//! becomes a Gaussian factor in the transformed clock parameters
//! `(1/alpha, beta/alpha)`, and the posterior marginals are recovered by
//! Gaussian belief propagation or mean-field message passing.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the
//! command-line interface and the parallel Monte-Carlo driver live in the
//! companion `clocksync` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod bcrb;
pub mod clock;
mod error;
pub mod experiment;
pub mod gauss;
pub mod link;
pub mod measurement;
pub mod metrics;
pub mod network;
pub mod posterior;
pub mod prior;
pub mod sync;
pub mod topology;
#[cfg(test)]
mod testutil;

pub use clock::{ClockParams, TransformedParams};
pub use error::Error;
pub use gauss::{GaussianNat, Mat2, Vec2};
pub use link::{DelayStats, LinkMatrices};
pub use measurement::{LinkDelayModel, LinkMeasurements};
pub use network::{EpochPolicy, NetworkModel};
pub use topology::{NodeId, Topology};
