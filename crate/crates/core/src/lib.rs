//! Arrival-time distributions of pilot-wave trajectories.
//!
//! Everything runs in natural units ħ = m = σ = 1, where the time unit is
//! mσ²/ħ and the trap frequency is ω = 1/2. See [`units`] for conversions.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bins;
pub mod config;
pub mod detector;
pub mod error;
pub mod fokker_planck;
pub mod field;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod trajectories;
pub mod units;
pub mod wavefunction;

pub use bins::TimeGrid;
pub use detector::{DetectorMode, DetectorSpec};
pub use error::{Error, Result};
pub use units::{derive_params, PhysicalInput, PhysicsParams, UnitSystem};
pub use wavefunction::{GaussianPacket, KinematicsSample, PacketSum, WavefunctionSpec};
