//! Model state spaces: circle, torus, interval with a boundary condition,
//! and a confined real line. Each carries its geodesic metric, normalized
//! invariant measure, the uniform ball-mass bound psi and its generalized
//! inverse, and invariant-measure sampling.

use arrayvec::ArrayVec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum point dimension supported by the simulators.
pub const MAX_DIM: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Neumann,
    Dirichlet,
}

/// A model state space. Lengths are in abstract distance units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Space {
    Circle {
        circumference: f64,
    },
    Torus {
        dim: usize,
        side: f64,
    },
    Interval {
        length: f64,
        boundary: BoundaryCondition,
    },
    /// Real line with confining potential V(x) = (1 + theta x^2)^tau,
    /// invariant density proportional to exp(-V).
    ConfinedLine {
        theta: f64,
        tau: f64,
    },
}

/// A point of a space, canonicalized into the fundamental domain at
/// construction: [0, L)^d for circle/torus, [0, l] for the interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    coords: ArrayVec<f64, MAX_DIM>,
}

impl Point {
    pub fn scalar(x: f64) -> Self {
        let mut coords = ArrayVec::new();
        coords.push(x);
        Point { coords }
    }

    pub fn new(coords: &[f64]) -> Self {
        Point {
            coords: coords.iter().copied().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Coordinate of a one-dimensional point.
    pub fn x(&self) -> f64 {
        debug_assert_eq!(self.coords.len(), 1);
        self.coords[0]
    }
}

fn wrap(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    // rem_euclid can return `period` itself when x is a tiny negative number
    if r >= period {
        0.0
    } else {
        r
    }
}

impl Space {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Space::Circle { circumference } => circumference > 0.0,
            Space::Torus { dim, side } => dim >= 1 && side > 0.0,
            Space::Interval { length, .. } => length > 0.0,
            Space::ConfinedLine { theta, tau } => theta > 0.0 && tau > 0.5,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid space parameters: {self:?}")))
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Space::Torus { dim, .. } => dim,
            _ => 1,
        }
    }

    /// Canonicalize a raw coordinate vector into the fundamental domain.
    pub fn canonical_point(&self, coords: &[f64]) -> Result<Point> {
        if coords.len() != self.dim() {
            return Err(Error::Domain(format!(
                "expected {} coordinates, got {}",
                self.dim(),
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("non-finite coordinate".into()));
        }
        match *self {
            Space::Circle { circumference } => Ok(Point::scalar(wrap(coords[0], circumference))),
            Space::Torus { side, .. } => {
                let wrapped: Vec<f64> = coords.iter().map(|&c| wrap(c, side)).collect();
                Ok(Point::new(&wrapped))
            }
            Space::Interval { length, .. } => {
                let x = coords[0];
                if !(0.0..=length).contains(&x) {
                    return Err(Error::Domain(format!("{x} outside [0, {length}]")));
                }
                Ok(Point::scalar(x))
            }
            Space::ConfinedLine { .. } => Ok(Point::scalar(coords[0])),
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        if p.dim() != self.dim() {
            return false;
        }
        match *self {
            Space::Circle { circumference } => (0.0..circumference).contains(&p.x()),
            Space::Torus { side, .. } => p.coords().iter().all(|&c| (0.0..side).contains(&c)),
            Space::Interval { length, .. } => (0.0..=length).contains(&p.x()),
            Space::ConfinedLine { .. } => p.x().is_finite(),
        }
    }

    /// Geodesic distance: wrap-around minimum on circle/torus, absolute
    /// difference (Euclidean in d dims) on interval and line.
    pub fn metric(&self, x: &Point, y: &Point) -> Result<f64> {
        if !self.contains(x) || !self.contains(y) {
            return Err(Error::Domain("metric argument outside the space".into()));
        }
        Ok(match *self {
            Space::Circle { circumference } => circle_dist(x.x(), y.x(), circumference),
            Space::Torus { side, .. } => {
                let sq: f64 = x
                    .coords()
                    .iter()
                    .zip(y.coords())
                    .map(|(&a, &b)| {
                        let d = circle_dist(a, b, side);
                        d * d
                    })
                    .sum();
                sq.sqrt()
            }
            Space::Interval { .. } | Space::ConfinedLine { .. } => (x.x() - y.x()).abs(),
        })
    }

    /// Uniform-over-centers upper bound psi(r) on the invariant mass of a
    /// metric ball of radius r. For the torus, the bound uses the sup-metric
    /// ball superset, which keeps psi closed-form and is still an upper bound.
    pub fn mu_ball(&self, r: f64) -> Result<f64> {
        if r < 0.0 {
            return Err(Error::InvalidArgument("negative radius".into()));
        }
        match *self {
            Space::Circle { circumference } => Ok((2.0 * r / circumference).min(1.0)),
            Space::Interval { length, .. } => Ok((2.0 * r / length).min(1.0)),
            Space::Torus { dim, side } => Ok(((2.0 * r / side).powi(dim as i32)).min(1.0)),
            Space::ConfinedLine { .. } => {
                Err(Error::UnsupportedSpace("mu_ball on the confined line".into()))
            }
        }
    }

    /// Generalized inverse psi^{-1}(s) = sup{r >= 0 : psi(r) <= s}.
    pub fn psi_inverse(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidArgument(format!("s = {s} outside [0, 1]")));
        }
        match *self {
            Space::Circle { circumference } => Ok(s * circumference / 2.0),
            Space::Interval { length, .. } => Ok(s * length / 2.0),
            Space::Torus { dim, side } => Ok(s.powf(1.0 / dim as f64) * side / 2.0),
            Space::ConfinedLine { .. } => {
                Err(Error::UnsupportedSpace("psi_inverse on the confined line".into()))
            }
        }
    }

    /// CDF of the invariant measure for the one-dimensional spaces
    /// (marginal coordinate on circle). Used by distribution tests.
    pub fn invariant_cdf(&self, x: f64) -> Result<f64> {
        match *self {
            Space::Circle { circumference } => Ok((x / circumference).clamp(0.0, 1.0)),
            Space::Interval { length, .. } => Ok((x / length).clamp(0.0, 1.0)),
            Space::ConfinedLine { .. } => {
                let table = ConfinedLineTable::new(self)?;
                Ok(table.cdf(x))
            }
            Space::Torus { .. } => Err(Error::UnsupportedSpace(
                "invariant_cdf is one-dimensional".into(),
            )),
        }
    }

    /// Invariant density with respect to Lebesgue measure (1D spaces).
    pub fn invariant_density(&self, x: f64) -> Result<f64> {
        match *self {
            Space::Circle { circumference } => Ok(1.0 / circumference),
            Space::Interval { length, .. } => Ok(1.0 / length),
            Space::ConfinedLine { theta, tau } => {
                let table = ConfinedLineTable::new(self)?;
                Ok((-(1.0 + theta * x * x).powf(tau)).exp() / table.normalization)
            }
            Space::Torus { .. } => Err(Error::UnsupportedSpace(
                "invariant_density is one-dimensional".into(),
            )),
        }
    }

    pub fn sampler(&self) -> Result<InvariantSampler> {
        InvariantSampler::new(self)
    }
}

fn circle_dist(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).abs();
    d.min(period - d)
}

/// Samples i.i.d. points from the invariant measure.
///
/// For circle/torus/interval the draws are plain uniforms; for the confined
/// line a tabulated inverse CDF is precomputed once at construction.
pub struct InvariantSampler {
    space: Space,
    table: Option<ConfinedLineTable>,
}

impl InvariantSampler {
    pub fn new(space: &Space) -> Result<Self> {
        space.validate()?;
        let table = match space {
            Space::ConfinedLine { .. } => Some(ConfinedLineTable::new(space)?),
            _ => None,
        };
        Ok(InvariantSampler { space: *space, table })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Point {
        match self.space {
            Space::Circle { circumference } => Point::scalar(rng.gen::<f64>() * circumference),
            Space::Interval { length, .. } => Point::scalar(rng.gen::<f64>() * length),
            Space::Torus { dim, side } => {
                let coords: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() * side).collect();
                Point::new(&coords)
            }
            Space::ConfinedLine { .. } => {
                let table = self.table.as_ref().expect("table built at construction");
                Point::scalar(table.inverse_cdf(rng.gen::<f64>()))
            }
        }
    }
}

/// One i.i.d. draw from the invariant measure. For bulk sampling on the
/// confined line prefer [`InvariantSampler`], which amortizes the CDF table.
pub fn sample_invariant<R: Rng>(space: &Space, rng: &mut R) -> Result<Point> {
    Ok(InvariantSampler::new(space)?.sample(rng))
}

/// Tabulated CDF of the density proportional to exp(-(1 + theta x^2)^tau).
struct ConfinedLineTable {
    xs: Vec<f64>,
    cdf: Vec<f64>,
    normalization: f64,
}

const CONFINED_TABLE_SIZE: usize = 8192;

impl ConfinedLineTable {
    fn new(space: &Space) -> Result<Self> {
        let (theta, tau) = match *space {
            Space::ConfinedLine { theta, tau } => (theta, tau),
            _ => unreachable!(),
        };
        space.validate()?;
        // Cutoff where the density has dropped by e^{-40} relative to x = 0.
        let r = (((41.0f64).powf(1.0 / tau) - 1.0) / theta).sqrt();
        let n = CONFINED_TABLE_SIZE;
        let xs: Vec<f64> = (0..=n)
            .map(|i| -r + 2.0 * r * i as f64 / n as f64)
            .collect();
        let density: Vec<f64> = xs
            .iter()
            .map(|&x| (1.0 - (1.0 + theta * x * x).powf(tau)).exp())
            .collect();
        let mut cdf = vec![0.0; n + 1];
        for i in 1..=n {
            cdf[i] = cdf[i - 1] + 0.5 * (density[i - 1] + density[i]) * (xs[i] - xs[i - 1]);
        }
        let total = cdf[n];
        // density above was scaled by e^{+1}; undo it in the normalization
        let normalization = total * (-1.0f64).exp();
        for c in cdf.iter_mut() {
            *c /= total;
        }
        Ok(ConfinedLineTable { xs, cdf, normalization })
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= *self.xs.last().unwrap() {
            return 1.0;
        }
        let i = self.xs.partition_point(|&v| v < x) - 1;
        let w = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.cdf[i] + w * (self.cdf[i + 1] - self.cdf[i])
    }

    fn inverse_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.xs[i - 1] + w * (self.xs[i] - self.xs[i - 1])
    }
}
