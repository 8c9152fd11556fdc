//! Spectral and time-domain stability toolkit for relaxation shock
//! profiles: profile construction, structural hypothesis checks, Evans
//! function winding computations, pointwise Green's function bounds
//! (characteristic, excited, and scattering parts), and direct simulation
//! for cross-validation.

pub mod asymptotics;
pub mod config;
pub mod error;
pub mod evans;
pub mod greens;
pub mod linalg;
pub mod model;
pub mod profile;
pub mod simulate;

pub use error::{Error, Result};
