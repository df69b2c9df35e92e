//! Repeated zero-sum games whose value functions approximate viscosity
//! solutions of nonlocal parabolic equations, eikonal equations with
//! sign-changing speed, and integral curvature flows.

pub mod config;
pub mod curvature;
pub mod cutoff;
pub mod eikonal;
pub mod error;
pub mod fields;
pub mod icf;
pub mod levy;
pub mod oracles;
pub mod pide;
pub mod quadrature;

pub use error::{Error, Result};

/// Crate version, echoed in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
