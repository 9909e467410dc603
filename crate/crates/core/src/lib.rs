//! Numerical core of a Monte Carlo simulator for cellular, cell-free and
//! heterogeneous massive MIMO networks.
//!
//! Everything here is `no_std` + `alloc`; file formats, the CLI and the parallel
//! runner live in the `hetmimo` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod config;
pub mod downlink;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod linalg;
pub mod power_control;
pub mod propagation;
pub mod rng;
pub mod simulation;
pub mod spectral;
pub mod uplink;
pub mod validation;

pub use config::{Paradigm, PowerControl, Preset, ScenarioConfig};
pub use error::{Error, Result};
