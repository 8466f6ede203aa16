//! Simulation and verification of lognormal ★-scale invariant random measures.
//!
//! The crate is organised bottom-up: seed kernels and their integrals
//! ([`kernel`]), spectral synthesis ([`spectral`]), stationary field sampling
//! and measure assembly ([`field`], [`measure`], [`ensemble`]) and the
//! statistics that confront ensembles with the theory ([`stats`]).

pub mod ensemble;
pub mod error;
pub mod field;
pub mod grid;
pub mod kernel;
pub mod measure;
pub mod persist;
pub mod quad;
pub mod rng;
pub mod special;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{GridSpec, ScaleLadder};
pub use kernel::{KernelSpec, SeedKernel};
pub use measure::{MeasureSample, YLaw};
