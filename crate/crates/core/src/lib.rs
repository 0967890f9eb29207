//! Certification, synthesis and simulation of residual neural-network observers.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: residual networks, forward passes and the isolation of their
//!   activations into block-matrix form.
//! - [`qc`]: sector quadratic constraints and assembly of the observer LMIs.
//! - [`sdp`]: symmetric eigensolver, Lyapunov solver and a small barrier
//!   method for dense LMI feasibility problems.
//! - [`synthesis`]: rank tests, stabilizing gains, diagonal-dominance checks
//!   and constructive observer synthesis.
//! - [`observers`]: observer, controller and baseline right-hand sides.
//! - [`sim`]: fixed-step simulation, scenarios, metrics and epsilon sweeps.

pub mod error;
pub mod linalg;
pub mod nn;
pub mod observers;
pub mod qc;
pub mod sdp;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};
pub use linalg::{Mat, Vector};
