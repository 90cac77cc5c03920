//! Desk-scale laboratory for the convergence of diffusion empirical
//! measures in Wasserstein distance: explicit model spaces with spectral
//! data, exact-in-law simulators, exact 1D / entropic 2D transport
//! engines, closed-form limit constants and rate envelopes, and a Monte
//! Carlo harness that checks the simulations against the constants.

pub mod cli;
pub mod error;
pub mod harness;
pub mod rng;
pub mod sim;
pub mod spaces;
pub mod spectral;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
pub use sim::{EmpiricalMeasure, SamplePath};
pub use spaces::{BoundaryCondition, InvariantSampler, Point, Space};
pub use spectral::{BoundaryFlavor, SpectralBasis};
pub use transport::{DensityOnGrid, DistanceReport, TransportInput};
