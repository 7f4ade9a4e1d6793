//! Multi-body semi-classical spin model.
//!
//! A single spin-½ is represented by a small open-boundary lattice of planar
//! rotors. Each rotor feels a double-well field torque with stable points at
//! θ = 0 and θ = π, and is tied to its grid neighbors by springs acting on
//! the chord between unit vectors. With the spring rest length at 2 the
//! coupling is anti-ferromagnetic. A run evolves freely (chaotically) until
//! damping switches on, after which the lattice settles and is classified Up
//! or Down by the sign of its net moment along the field.
//!
//! The crate provides the model ([`model`]), an adaptive Dormand–Prince
//! integrator ([`integrator`]), single runs ([`trajectory`]), parallel
//! angle sweeps compared with `cos²(θ/2)` ([`ensemble`]), Lyapunov
//! measurement ([`chaos`]) and the configuration and output layer behind the
//! `qspin` binary ([`config`], [`cli`]).

pub mod chaos;
pub mod cli;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod integrator;
pub mod model;
pub mod trajectory;
pub mod validation;

pub use error::{Error, Result};
