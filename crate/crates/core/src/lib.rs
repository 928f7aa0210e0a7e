//! Quantum hydrodynamics toolkit: Crank–Nicolson wave evolution, Madelung
//! fields, Bohmian and classical trajectories, action-deviation
//! statistics and a reproducible run harness.

pub mod error;
pub use error::{Error, Result};

pub mod classical;
pub mod deviation;
pub mod evolve;
pub mod fields;
pub mod harness;
pub mod stats;
pub mod trajectories;
