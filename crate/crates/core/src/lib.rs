//! Simulation and verification lab for γ-stable continuum random trees.

pub mod analytic;
pub mod error;
pub mod fractal;
pub mod gauges;
pub mod rng;
pub mod runner;
pub mod samplers;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};
