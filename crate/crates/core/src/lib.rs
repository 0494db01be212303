//! Feynman-cycle statistics and off-diagonal long-range order in the Bose gas.
//!
//! * [`heat_kernel`]: periodic Gaussian kernels, theta sums and Brownian bridges.
//! * [`ideal_canonical`]: exact finite-volume canonical ideal gas.
//! * [`ideal_grand`]: infinite-volume grand-canonical ideal gas.
//! * [`pimc`]: path-integral Monte Carlo for interacting bosons.
//! * [`cluster`]: Kotecky-Preiss criterion and pair-order cluster terms.

pub mod cluster;
pub mod error;
pub mod geometry;
pub mod heat_kernel;
pub mod ideal_canonical;
pub mod ideal_grand;
pub mod pimc;
pub mod series;

pub use error::{Error, Result};
pub use geometry::{EnsembleVariable, SimulationBox, ThermoParams};
