//! Velocity of the belief-propagation decoding wave in spatially coupled
//! LDPC ensembles.
//!
//! This crate holds the scalar machinery: degree distributions, density
//! evolution and potentials on the erasure channel, the Gaussian
//! approximation for the binary-input AWGN channel, and the shared front
//! solvers (discrete coupled chains and the continuum wave-shape equation).
//! It is `no_std` and only needs an allocator.
//!
//! Density-valued (general BMS) evolution lives in the `wavefront` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bec;
pub mod ensemble;
mod error;
pub mod front;
pub mod gauss;
pub mod numeric;

pub use ensemble::{DegreePolynomial, Ensemble};
pub use error::{Error, ErrorKind, Result};
pub use front::{CoupledState, GridConfig, Profile, Snapshot, Trajectory, WaveSolution};
