//! Pronking dynamics and control.
//!
//! Spring-loaded inverted pendulum (SLIP) template and planar hexapod anchor
//! dynamics, an event-driven hybrid integrator producing apex-to-apex return
//! maps, a dead-beat stride controller over a parameterized predictive map,
//! an indirect adaptive stiffness law, and numerical Poincaré stability
//! analysis.
//!
//! Everything here is `no_std` (with `alloc`) and free of I/O. Simulation runs
//! in dimensionless units: lengths in rest leg lengths, time in `sqrt(l0/g)`,
//! mass in body masses. [`model::DimensionlessScale`] converts to and from SI.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod control;
pub mod error;
pub mod hybrid;
pub mod integrate;
pub mod linalg;
mod math;
pub mod model;
pub mod predict;

pub use error::{Error, FaultKind, Result};
pub use model::{ApexState, ControlInput, ParamEstimate, PlantParams, SlipParams};
