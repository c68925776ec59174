//! Simulation core for downlink user-centric cell-free massive MIMO with
//! mobile UEs.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. It contains:
//!
//! * [`sitemap`]: building footprints, the 1 m flag grid and exact 2D
//!   geometry queries.
//! * [`mobility`]: the maneuvering smooth random-waypoint walk.
//! * [`channel`]: an image-method specular tracer and multipath channel draws.
//! * [`assoc`]: initial access, the pilot/cluster update (soft handover),
//!   basic and serving-set-based pilot metrics, and the single-AP baseline.
//! * [`phy`]: LS estimation, MR/RZF precoding, power allocation and the
//!   use-and-then-forget SE evaluator.
//!
//! Scenario wiring, file formats and the CLI live in the `cellfree-sim` crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod assoc;
pub mod channel;
pub mod geom;
pub mod linalg;
pub mod math;
pub mod mobility;
pub mod phy;
pub mod rng;
pub mod sitemap;

pub use num_complex::Complex64;

/// Index of an access point.
pub type ApId = usize;
/// Index of a UE.
pub type UeId = usize;
/// Index of an orthogonal pilot sequence, `0..tau_p`.
pub type PilotId = usize;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
