//! Stochastic thermal quasi-geostrophic (SALT TQG) dynamics on the periodic
//! 2-torus: a spectral/flux-form simulator with a truncated stochastic
//! SSPRK3 integrator, and the diagnostics and experiments used to verify it.

pub mod config;
pub mod consistency;
pub mod diagnostics;
pub mod elliptic;
pub mod ensemble;
pub mod error;
pub mod model;
pub mod noise;
pub mod snapshot;
pub mod stepper;
pub mod torus;
pub mod transport;

pub use error::{Result, StqgError};
