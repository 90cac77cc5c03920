//! Wasserstein distance engines: exact 1D quantile coupling, exact circular
//! transport via cut minimization, entropic transport on the 2-torus, and
//! closed-form upper/lower bounds.

pub mod bounds;
pub mod circle;
pub mod quantile;
pub mod sinkhorn;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::EmpiricalMeasure;
use crate::spaces::Space;

pub use bounds::{lb101_bound, ta1_upper_bound, w1_dual_lower, Ta1Report};
pub use circle::{w2sq_circle_vs_uniform, wp_circle};
pub use quantile::{wp_line, QuantileFn};
pub use sinkhorn::{sinkhorn_torus, SinkhornParams};

/// A probability density w.r.t. the invariant measure, piecewise constant on
/// a uniform grid of cells (n cells in 1D, m x m row-major on the 2-torus).
#[derive(Clone, Debug)]
pub struct DensityOnGrid {
    pub space: Space,
    pub values: Vec<f64>,
}

impl DensityOnGrid {
    pub fn new(space: Space, values: Vec<f64>) -> Result<Self> {
        space.validate()?;
        match space {
            Space::Circle { .. } | Space::Interval { .. } => {}
            Space::Torus { dim: 2, .. } => {
                let m = (values.len() as f64).sqrt().round() as usize;
                if m * m != values.len() {
                    return Err(Error::InvalidArgument(
                        "torus density needs a square number of cells".into(),
                    ));
                }
            }
            _ => {
                return Err(Error::UnsupportedSpace(
                    "grid densities live on circle, interval, or 2-torus".into(),
                ))
            }
        }
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty density grid".into()));
        }
        if values.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument("density values must be nonnegative".into()));
        }
        // cells carry equal mu-mass, so the normalization quadrature is the mean
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        if (mean - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "density quadrature is {mean}, expected 1"
            )));
        }
        Ok(DensityOnGrid { space, values })
    }

    pub fn uniform(space: Space, n: usize) -> Result<Self> {
        DensityOnGrid::new(space, vec![1.0; n])
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    pub fn is_uniform(&self) -> bool {
        self.values.iter().all(|&v| (v - 1.0).abs() < 1e-14)
    }

    /// Domain length of a 1D grid.
    pub fn domain_length(&self) -> f64 {
        match self.space {
            Space::Circle { circumference } => circumference,
            Space::Interval { length, .. } => length,
            Space::Torus { side, .. } => side,
            Space::ConfinedLine { .. } => unreachable!("validated in the constructor"),
        }
    }

    /// Center of 1D cell i.
    pub fn cell_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.domain_length() / self.n_cells() as f64
    }
}

/// Either side of a transport problem.
#[derive(Clone, Copy)]
pub enum TransportInput<'a> {
    Empirical(&'a EmpiricalMeasure),
    Density(&'a DensityOnGrid),
}

impl<'a> TransportInput<'a> {
    pub fn space(&self) -> &Space {
        match self {
            TransportInput::Empirical(m) => &m.space,
            TransportInput::Density(d) => &d.space,
        }
    }

    /// Smallest positive mass granule, used to size the circular cut grid.
    pub fn min_mass_gap(&self) -> f64 {
        match self {
            TransportInput::Empirical(m) => m
                .atoms
                .iter()
                .map(|a| a.1)
                .filter(|&w| w > 0.0)
                .fold(1.0, f64::min),
            TransportInput::Density(d) => {
                let n = d.n_cells() as f64;
                d.values.iter().filter(|&&v| v > 0.0).fold(1.0, |acc, &v| acc.min(v / n))
            }
        }
    }

    pub fn is_uniform_density(&self) -> bool {
        matches!(self, TransportInput::Density(d) if d.is_uniform())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact1d,
    CircleExact,
    Sinkhorn,
    Bound,
}

/// Outcome of a distance computation.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DistanceReport {
    pub p: f64,
    pub value: f64,
    pub method: Method,
    pub error_estimate: f64,
}

pub(crate) fn validate_order(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("Wasserstein order p = {p} must be >= 1")))
    }
}
