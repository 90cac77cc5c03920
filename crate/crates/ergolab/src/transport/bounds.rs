//! Closed-form transport bounds: the spectral upper bound on W_p between
//! two densities, the small-ball lower bound for N-point measures, and the
//! Kantorovich-Rubinstein dual lower bound for W_1.

use crate::error::{Error, Result};
use crate::spaces::Space;
use crate::spectral::{BoundaryFlavor, SpectralBasis};
use crate::transport::{validate_order, DensityOnGrid, TransportInput};
use crate::spaces::Point;

/// Result of the three-way spectral upper bound on W_p(f1 mu, f2 mu)^p.
#[derive(Clone, Copy, Debug)]
pub struct Ta1Report {
    /// min of the three bounds; an upper bound on W_p^p.
    pub value: f64,
    /// The individual bounds: [symmetrized, Ledoux-type, M_p-weighted].
    pub bounds: [f64; 3],
    /// The M_p bound is skipped where its weight diverges (f1 and f2 both
    /// vanish under a nonzero transport field).
    pub third_bound_skipped: bool,
    /// Spectral-truncation error indicator: energy sum b_i^2/lambda_i^2
    /// carried by the top decade of computed modes.
    pub truncation_indicator: f64,
}

/// Upper bound on W_p(f1 mu, f2 mu)^p as the minimum of three integrals of
/// the transport field grad (-L)^{-1}(f2 - f1), computed spectrally:
///
///   p^p 2^{p-1} int |X|^p / (f1+f2)^{p-1} dmu,
///   p^p int |X|^p / f1^{p-1} dmu,
///   int |X|^p M_p(f1, f2) dmu,
///
/// with M_p(a,b) = 1_{a and b > 0} (a^{2-p} - b^{2-p}) / ((2-p)(a-b)) and
/// M_p(a,a) = 1_{a>0} a^{1-p}. M_p is the interpolation weight
/// int_0^1 ((1-s)a + s b)^{1-p} ds of the Benamou-Brenier mixture flow
/// (at p = 2 the reciprocal of the logarithmic mean), so the third bound
/// carries it as a multiplicative weight; it diverges where f1 ^ f2 = 0 and
/// is then skipped via the indicator convention. The f1 = 1 case of the
/// second bound is the classical p^p mu(|grad(-L)^{-1}(f-1)|^p).
pub fn ta1_upper_bound(
    basis: &SpectralBasis,
    f1: &DensityOnGrid,
    f2: &DensityOnGrid,
    p: f64,
) -> Result<Ta1Report> {
    validate_order(p)?;
    if basis.flavor() == BoundaryFlavor::Dirichlet {
        return Err(Error::WrongBoundaryFlavor {
            expected: "closed/Neumann".into(),
            got: basis.flavor().to_string(),
        });
    }
    let space = basis
        .space()
        .ok_or_else(|| Error::UnsupportedSpace("synthetic basis has no geometry".into()))?;
    if f1.space != *space || f2.space != *space {
        return Err(Error::MismatchedSpaces);
    }
    if space.dim() != 1 {
        return Err(Error::UnsupportedSpace("the spectral bound is one-dimensional here".into()));
    }
    let n = f1.n_cells();
    if f2.n_cells() != n {
        return Err(Error::MismatchedSpaces);
    }
    if f1.values.iter().zip(&f2.values).any(|(&a, &b)| a <= 0.0 && b <= 0.0) {
        return Err(Error::InvalidArgument("precondition f1 v f2 > 0 violated on a cell".into()));
    }

    let centers: Vec<f64> = (0..n).map(|j| f1.cell_center(j)).collect();
    let diff: Vec<f64> = (0..n).map(|j| f2.values[j] - f1.values[j]).collect();

    // spectral coefficients of the difference; cap modes at n/2 to stay
    // clear of grid aliasing
    let i_max = basis.n_max().min(n / 2).max(2);
    let coeffs: Vec<f64> = (0..i_max)
        .map(|i| {
            centers
                .iter()
                .zip(&diff)
                .map(|(&x, &d)| d * basis.phi(i, &Point::scalar(x)))
                .sum::<f64>()
                / n as f64
        })
        .collect();

    // transport field X = sum_i (b_i / lambda_i) phi_i' on the grid
    let mut field = vec![0.0; n];
    for i in 1..i_max {
        let scale = coeffs[i] / basis.lambda(i)?;
        for (j, &x) in centers.iter().enumerate() {
            field[j] += scale * basis.phi_prime(i, &Point::scalar(x))?;
        }
    }

    let tail_start = (9 * i_max) / 10;
    let truncation_indicator: f64 = (tail_start.max(1)..i_max)
        .map(|i| {
            let l = basis.lambda(i).unwrap();
            coeffs[i] * coeffs[i] / (l * l)
        })
        .sum();

    let pf = p.powf(p);
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    let mut b3 = 0.0;
    let mut skipped = false;
    for j in 0..n {
        let num = field[j].abs().powf(p) / n as f64;
        let (a, b) = (f1.values[j], f2.values[j]);
        b1 += pf * 2.0f64.powf(p - 1.0) * num / (a + b).powf(p - 1.0);
        if a > 0.0 || p == 1.0 {
            b2 += pf * num / a.powf(p - 1.0);
        } else if num > 0.0 {
            b2 = f64::INFINITY;
        }
        let m = m_p(a, b, p);
        if m > 0.0 {
            b3 += num * m;
        } else if num > 0.0 {
            skipped = true;
        }
    }
    if skipped {
        b3 = f64::INFINITY;
    }
    Ok(Ta1Report {
        value: b1.min(b2).min(b3),
        bounds: [b1, b2, b3],
        third_bound_skipped: skipped,
        truncation_indicator,
    })
}

/// The mean function M_p with the indicator convention at zero.
fn m_p(a: f64, b: f64, p: f64) -> f64 {
    if a.min(b) <= 0.0 {
        return 0.0;
    }
    if (a - b).abs() < 1e-12 * (a + b) {
        return a.powf(1.0 - p);
    }
    if p == 2.0 {
        (a.ln() - b.ln()) / (a - b)
    } else {
        (a.powf(2.0 - p) - b.powf(2.0 - p)) / ((2.0 - p) * (a - b))
    }
}

/// Lower bound W_p(mu_N, mu) >= 2^{-1/p} psi^{-1}(1/(2N)) valid for every
/// measure supported on N points.
pub fn lb101_bound(space: &Space, n_atoms: usize, p: f64) -> Result<f64> {
    validate_order(p)?;
    if n_atoms == 0 {
        return Err(Error::InvalidArgument("atom count must be positive".into()));
    }
    Ok(2.0f64.powf(-1.0 / p) * space.psi_inverse(1.0 / (2.0 * n_atoms as f64))?)
}

/// Kantorovich-Rubinstein lower bound: max over verified 1-Lipschitz
/// witnesses of |mu1(f) - mu2(f)|. A certified lower bound on W_1, hence on
/// every W_p.
pub fn w1_dual_lower(
    mu1: &TransportInput<'_>,
    mu2: &TransportInput<'_>,
    witnesses: &[&dyn Fn(f64) -> f64],
) -> Result<f64> {
    if mu1.space() != mu2.space() {
        return Err(Error::MismatchedSpaces);
    }
    let space = *mu1.space();
    if space.dim() != 1 {
        return Err(Error::UnsupportedSpace("scalar witnesses need a one-dimensional space".into()));
    }
    let (lo, hi, wrap) = match space {
        Space::Circle { circumference } => (0.0, circumference, true),
        Space::Interval { length, .. } => (0.0, length, false),
        Space::ConfinedLine { .. } => {
            let extent = |input: &TransportInput<'_>| match input {
                TransportInput::Empirical(m) => m
                    .atoms
                    .iter()
                    .map(|a| a.0.x())
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                        (lo.min(x), hi.max(x))
                    }),
                TransportInput::Density(_) => (0.0, 0.0),
            };
            let (l1, h1) = extent(mu1);
            let (l2, h2) = extent(mu2);
            (l1.min(l2) - 1.0, h1.max(h2) + 1.0, false)
        }
        Space::Torus { .. } => unreachable!("dim() == 1 excludes the torus"),
    };

    let grid = 4096usize;
    let step = (hi - lo) / grid as f64;
    let mut best = 0.0f64;
    for f in witnesses {
        // finite-difference Lipschitz certificate on the grid
        let vals: Vec<f64> = (0..=grid).map(|i| f(lo + i as f64 * step)).collect();
        for w in vals.windows(2) {
            let slope = (w[1] - w[0]).abs() / step;
            if slope > 1.0 + 1e-6 {
                return Err(Error::LipschitzViolation { slope });
            }
        }
        if wrap {
            let slope = (vals[grid] - vals[0]).abs() / step.max(1e-300);
            // adjacent across the seam: f(hi) ~ f(lo) since hi = lo on the circle
            if (vals[grid] - vals[0]).abs() > 1e-6 {
                return Err(Error::LipschitzViolation { slope });
            }
        }
        let gap = (integrate(mu1, f) - integrate(mu2, f)).abs();
        best = best.max(gap);
    }
    Ok(best)
}

fn integrate(input: &TransportInput<'_>, f: &&dyn Fn(f64) -> f64) -> f64 {
    match input {
        TransportInput::Empirical(m) => m.integrate(|x| f(x)),
        TransportInput::Density(d) => {
            let n = d.n_cells();
            (0..n).map(|j| d.values[j] * f(d.cell_center(j))).sum::<f64>() / n as f64
        }
    }
}
