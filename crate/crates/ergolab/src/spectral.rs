//! Explicit eigenbases of the reference generator on each model space,
//! the spectral limit constants and rate envelopes, and heat-kernel
//! evaluation by truncated eigenfunction series.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spaces::{BoundaryCondition, Point, Space};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryFlavor {
    Closed,
    Neumann,
    Dirichlet,
}

impl std::fmt::Display for BoundaryFlavor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BoundaryFlavor::Closed => "closed",
            BoundaryFlavor::Neumann => "Neumann",
            BoundaryFlavor::Dirichlet => "Dirichlet",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Trig {
    One,
    Cos,
    Sin,
}

/// One eigenfunction in closed form.
#[derive(Clone, Debug)]
enum Mode {
    Constant,
    /// sqrt(2) cos(k w x) or sqrt(2) sin(k w x) on the circle, w = 2 pi / L.
    Circle { k: u32, trig: Trig, omega: f64 },
    /// sqrt(2) cos(k pi x / l) on [0, l].
    NeumannCos { k: u32, omega: f64 },
    /// sqrt(2) sin(k pi x / l) on [0, l], k >= 1.
    DirichletSin { k: u32, omega: f64 },
    /// Product of per-coordinate factors on the torus.
    TorusProd { factors: Vec<(u32, Trig)>, omega: f64 },
    /// Eigenvalue-only mode for synthetic bases; not evaluable.
    Synthetic,
}

/// Two-sided eigenvalue growth data: c1 * i^{2/d} <= lambda_i <= kappa * i^{2/d}
/// for i >= 1, plus the analogous lower constant for Dirichlet gaps.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GrowthBounds {
    pub c1: f64,
    pub kappa: f64,
    pub d_eff: f64,
    /// lambda_i - lambda_0 >= gap_c1 * i^{2/d} (Dirichlet bases).
    pub gap_c1: f64,
}

/// Ordered eigenpairs (lambda_i, phi_i) of the reference generator,
/// truncated at `n_max` modes (index 0 is the ground state).
///
/// Ordering is by nondecreasing eigenvalue with deterministic tie-breaking:
/// cosine before sine, then lexicographic frequency vectors.
pub struct SpectralBasis {
    space: Option<Space>,
    flavor: BoundaryFlavor,
    modes: Vec<(f64, Mode)>,
    growth: GrowthBounds,
}

pub const DEFAULT_N_MAX: usize = 256;

/// A truncated positive series together with a rigorous bound on the
/// discarded tail, so the true value lies in [value, value + tail_bound].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub tail_bound: f64,
}

impl SpectralBasis {
    pub fn for_space(space: &Space, n_max: usize) -> Result<Self> {
        space.validate()?;
        if n_max == 0 {
            return Err(Error::InvalidArgument("n_max must be positive".into()));
        }
        match *space {
            Space::Circle { circumference } => {
                let omega = 2.0 * PI / circumference;
                let mut modes = vec![(0.0, Mode::Constant)];
                for i in 1..n_max {
                    let k = ((i + 1) / 2) as u32;
                    let trig = if i % 2 == 1 { Trig::Cos } else { Trig::Sin };
                    let lam = (k as f64 * omega).powi(2);
                    modes.push((lam, Mode::Circle { k, trig, omega }));
                }
                Ok(SpectralBasis {
                    space: Some(*space),
                    flavor: BoundaryFlavor::Closed,
                    modes,
                    growth: GrowthBounds {
                        c1: omega * omega / 4.0,
                        kappa: omega * omega,
                        d_eff: 1.0,
                        gap_c1: omega * omega / 4.0,
                    },
                })
            }
            Space::Interval { length, boundary } => {
                let omega = PI / length;
                let s = omega * omega;
                match boundary {
                    BoundaryCondition::Neumann => {
                        let mut modes = vec![(0.0, Mode::Constant)];
                        for i in 1..n_max {
                            let k = i as u32;
                            modes.push(((k as f64 * omega).powi(2), Mode::NeumannCos { k, omega }));
                        }
                        Ok(SpectralBasis {
                            space: Some(*space),
                            flavor: BoundaryFlavor::Neumann,
                            modes,
                            growth: GrowthBounds { c1: s, kappa: s, d_eff: 1.0, gap_c1: s },
                        })
                    }
                    BoundaryCondition::Dirichlet => {
                        let modes = (0..n_max)
                            .map(|i| {
                                let k = (i + 1) as u32;
                                ((k as f64 * omega).powi(2), Mode::DirichletSin { k, omega })
                            })
                            .collect();
                        Ok(SpectralBasis {
                            space: Some(*space),
                            flavor: BoundaryFlavor::Dirichlet,
                            modes,
                            // lambda_i = (i+1)^2 s in [i^2 s, 4 i^2 s];
                            // gaps lambda_i - lambda_0 = (i^2 + 2i) s >= i^2 s
                            growth: GrowthBounds { c1: s, kappa: 4.0 * s, d_eff: 1.0, gap_c1: s },
                        })
                    }
                }
            }
            Space::Torus { dim, side } => {
                let omega = 2.0 * PI / side;
                let modes = torus_modes(dim, omega, n_max);
                let w2 = omega * omega;
                Ok(SpectralBasis {
                    space: Some(*space),
                    flavor: BoundaryFlavor::Closed,
                    modes,
                    // index i <= (3 sqrt(lambda_i)/omega)^d gives the lower constant;
                    // the upper constant is generous and verified in tests
                    growth: GrowthBounds {
                        c1: w2 / 9.0,
                        kappa: 4.0 * dim as f64 * w2,
                        d_eff: dim as f64,
                        gap_c1: w2 / 9.0,
                    },
                })
            }
            Space::ConfinedLine { .. } => Err(Error::UnsupportedSpace(
                "no explicit eigenbasis on the confined line".into(),
            )),
        }
    }

    /// Basis from an explicit eigenvalue list; eigenfunctions not evaluable.
    pub fn synthetic(
        flavor: BoundaryFlavor,
        eigenvalues: Vec<f64>,
        c1: f64,
        d_eff: f64,
    ) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidArgument("empty eigenvalue list".into()));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("eigenvalues must be nondecreasing".into()));
        }
        match flavor {
            BoundaryFlavor::Dirichlet if eigenvalues[0] <= 0.0 => {
                return Err(Error::InvalidArgument("Dirichlet ground eigenvalue must be positive".into()))
            }
            BoundaryFlavor::Closed | BoundaryFlavor::Neumann if eigenvalues[0] != 0.0 => {
                return Err(Error::InvalidArgument("closed/Neumann ground eigenvalue must be zero".into()))
            }
            _ => {}
        }
        let lambda0 = eigenvalues[0];
        let modes = eigenvalues.into_iter().map(|l| (l, Mode::Synthetic)).collect();
        Ok(SpectralBasis {
            space: None,
            flavor,
            modes,
            growth: GrowthBounds { c1, kappa: f64::INFINITY, d_eff, gap_c1: c1.min(lambda0.max(c1)) },
        })
    }

    pub fn space(&self) -> Option<&Space> {
        self.space.as_ref()
    }

    pub fn flavor(&self) -> BoundaryFlavor {
        self.flavor
    }

    pub fn n_max(&self) -> usize {
        self.modes.len()
    }

    pub fn growth(&self) -> GrowthBounds {
        self.growth
    }

    pub fn lambda(&self, i: usize) -> Result<f64> {
        self.modes
            .get(i)
            .map(|m| m.0)
            .ok_or(Error::IndexBeyondTruncation { index: i, n_max: self.n_max() })
    }

    /// The i-th eigenpair in nondecreasing eigenvalue order.
    pub fn eigenpair(&self, i: usize) -> Result<(f64, Eigenfunction<'_>)> {
        let lam = self.lambda(i)?;
        Ok((lam, Eigenfunction { basis: self, index: i }))
    }

    /// phi_i(x). Panics for synthetic bases (no evaluator).
    pub fn phi(&self, i: usize, p: &Point) -> f64 {
        eval_mode(&self.modes[i].1, p)
    }

    /// phi_i'(x) for one-dimensional bases.
    pub fn phi_prime(&self, i: usize, p: &Point) -> Result<f64> {
        let x = p.x();
        Ok(match &self.modes[i].1 {
            Mode::Constant => 0.0,
            Mode::Circle { k, trig, omega } => {
                let kw = *k as f64 * omega;
                match trig {
                    Trig::Cos => -std::f64::consts::SQRT_2 * kw * (kw * x).sin(),
                    Trig::Sin => std::f64::consts::SQRT_2 * kw * (kw * x).cos(),
                    Trig::One => 0.0,
                }
            }
            Mode::NeumannCos { k, omega } => {
                let kw = *k as f64 * omega;
                -std::f64::consts::SQRT_2 * kw * (kw * x).sin()
            }
            Mode::DirichletSin { k, omega } => {
                let kw = *k as f64 * omega;
                std::f64::consts::SQRT_2 * kw * (kw * x).cos()
            }
            Mode::TorusProd { .. } | Mode::Synthetic => {
                return Err(Error::UnsupportedSpace(
                    "eigenfunction derivative is one-dimensional".into(),
                ))
            }
        })
    }

    /// Theorem-4 limit constant with Z = 0: sum_{i>=1} 2 / lambda_i^2,
    /// truncated at n_max with a rigorous tail bound from the eigenvalue
    /// growth floor. Requires a closed/Neumann basis and d <= 3.
    pub fn limit_t4(&self) -> Result<SeriesValue> {
        if self.flavor == BoundaryFlavor::Dirichlet {
            return Err(Error::WrongBoundaryFlavor {
                expected: "closed/Neumann".into(),
                got: self.flavor.to_string(),
            });
        }
        if self.growth.d_eff >= 4.0 {
            return Err(Error::DivergentSeries { d_eff: self.growth.d_eff });
        }
        let value: f64 = self.modes[1..].iter().map(|(l, _)| 2.0 / (l * l)).sum();
        Ok(SeriesValue { value, tail_bound: power_tail(self.growth.c1, self.growth.d_eff, self.n_max() - 1) })
    }

    /// Theorem-2 quasi-stationary limit constant: sum_{i>=1} 2/(lambda_i - lambda_0)^2
    /// over the Dirichlet spectrum, with tail bound from the gap growth floor.
    pub fn limit_t2(&self) -> Result<SeriesValue> {
        if self.flavor != BoundaryFlavor::Dirichlet {
            return Err(Error::WrongBoundaryFlavor {
                expected: "Dirichlet".into(),
                got: self.flavor.to_string(),
            });
        }
        if self.growth.d_eff >= 4.0 {
            return Err(Error::DivergentSeries { d_eff: self.growth.d_eff });
        }
        let l0 = self.modes[0].0;
        let value: f64 = self.modes[1..]
            .iter()
            .map(|(l, _)| 2.0 / ((l - l0) * (l - l0)))
            .sum();
        Ok(SeriesValue {
            value,
            tail_bound: power_tail(self.growth.gap_c1, self.growth.d_eff, self.n_max() - 1),
        })
    }

    /// Theorem-1 limit constant for W2 of the conditional mean measure:
    ///
    ///   (1 / {mu(phi0) nu(phi0)}^2) sum_{i>=1}
    ///       {nu(phi0) mu(phi_i) + mu(phi0) nu(phi_i)}^2 / (lambda_i - lambda_0)^3
    ///
    /// `nu_coeffs[i]` = nu(phi_i), `mu_coeffs[i]` = mu(phi_i), indexed like the
    /// basis. Also reports the finiteness diagnostic sum nu(phi_i)^2 lambda_i^{-3}.
    pub fn limit_t1(&self, nu_coeffs: &[f64], mu_coeffs: &[f64]) -> Result<LimitT1> {
        if self.flavor != BoundaryFlavor::Dirichlet {
            return Err(Error::WrongBoundaryFlavor {
                expected: "Dirichlet".into(),
                got: self.flavor.to_string(),
            });
        }
        let nu0 = *nu_coeffs.first().unwrap_or(&0.0);
        let mu0 = *mu_coeffs.first().unwrap_or(&0.0);
        if nu0 <= 0.0 {
            return Err(Error::InvalidArgument(
                "nu is orthogonal to the ground state: nu(phi_0) <= 0".into(),
            ));
        }
        let l0 = self.modes[0].0;
        let n = nu_coeffs.len().min(mu_coeffs.len()).min(self.n_max());
        let mut sum = 0.0;
        let mut diagnostic = 0.0;
        for i in 1..n {
            let gap = self.modes[i].0 - l0;
            let num = nu0 * mu_coeffs[i] + mu0 * nu_coeffs[i];
            sum += num * num / gap.powi(3);
            diagnostic += nu_coeffs[i] * nu_coeffs[i] / self.modes[i].0.powi(3);
        }
        Ok(LimitT1 { value: sum / (mu0 * nu0).powi(2), finiteness_diagnostic: diagnostic })
    }

    /// CLT variance functional V_f = sum_{i>=1} a_i^2 / lambda_i for the
    /// symmetric reference diffusion, a_i = mu(f phi_i); a_0 is ignored.
    pub fn variance_vf(&self, f_coeffs: &[f64]) -> Result<f64> {
        if self.flavor == BoundaryFlavor::Dirichlet {
            return Err(Error::WrongBoundaryFlavor {
                expected: "closed/Neumann".into(),
                got: self.flavor.to_string(),
            });
        }
        Ok(f_coeffs
            .iter()
            .enumerate()
            .skip(1)
            .take(self.n_max() - 1)
            .map(|(i, a)| a * a / self.modes[i].0)
            .sum())
    }

    /// Heat kernel by truncated series:
    /// closed/Neumann: 1 + sum_{i>=1} e^{-lambda_i t} phi_i(x) phi_i(y);
    /// Dirichlet: sum_{i>=0} e^{-lambda_i t} phi_i(x) phi_i(y).
    ///
    /// Errors when the truncated tail e^{-lambda_last t} * n_max is not below
    /// 1e-8, reporting a sufficient n_max.
    pub fn heat_kernel(&self, t: f64, x: &Point, y: &Point) -> Result<f64> {
        if t <= 0.0 {
            return Err(Error::InvalidArgument("heat kernel needs t > 0".into()));
        }
        let lam_last = self.modes.last().unwrap().0;
        if (-lam_last * t).exp() * self.n_max() as f64 >= 1e-8 {
            return Err(Error::TruncationTooCoarse { t, required: self.required_modes_for(t) });
        }
        let mut sum = match self.flavor {
            BoundaryFlavor::Dirichlet => 0.0,
            _ => 1.0,
        };
        let start = match self.flavor {
            BoundaryFlavor::Dirichlet => 0,
            _ => 1,
        };
        for i in start..self.n_max() {
            let (lam, _) = self.modes[i];
            sum += (-lam * t).exp() * self.phi(i, x) * self.phi(i, y);
        }
        Ok(sum)
    }

    /// Smallest mode count m with e^{-c1 m^{2/d} t} * m < 1e-8 (growth floor).
    fn required_modes_for(&self, t: f64) -> usize {
        let mut m = self.n_max();
        while ((-self.growth.c1 * (m as f64).powf(2.0 / self.growth.d_eff) * t).exp()
            * m as f64)
            >= 1e-8
        {
            m *= 2;
            if m > 1 << 30 {
                break;
            }
        }
        m
    }

    /// One draw from the weak limit law sum_{i<=n_modes} 2 xi_i^2 / lambda_i^2
    /// with xi_i i.i.d. standard normal.
    pub fn limit_law_draw<R: Rng>(&self, n_modes: usize, rng: &mut R) -> Result<f64> {
        if self.flavor == BoundaryFlavor::Dirichlet {
            return Err(Error::WrongBoundaryFlavor {
                expected: "closed/Neumann".into(),
                got: self.flavor.to_string(),
            });
        }
        if n_modes >= self.n_max() {
            return Err(Error::IndexBeyondTruncation { index: n_modes, n_max: self.n_max() });
        }
        let mut sum = 0.0;
        for i in 1..=n_modes {
            let xi: f64 = rng.sample(StandardNormal);
            sum += 2.0 * xi * xi / (self.modes[i].0 * self.modes[i].0);
        }
        Ok(sum)
    }

    /// Integrate f against the invariant measure of a 1D basis space by
    /// composite Simpson quadrature (trapezoid on the circle, where it is
    /// spectrally accurate).
    pub fn quadrature<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let space = self
            .space
            .ok_or_else(|| Error::UnsupportedSpace("synthetic basis has no space".into()))?;
        quadrature_mu(&space, f)
    }

    /// Coefficient vector (mu(g phi_i))_{i < n} for a function of x.
    pub fn coefficients<F: Fn(f64) -> f64 + Copy>(&self, g: F, n: usize) -> Result<Vec<f64>> {
        (0..n.min(self.n_max()))
            .map(|i| self.quadrature(|x| g(x) * self.phi(i, &Point::scalar(x))))
            .collect()
    }

    /// JSON-exportable summary: eigenvalues, growth constants, tail bounds.
    pub fn summary(&self) -> BasisSummary {
        BasisSummary {
            flavor: self.flavor,
            n_max: self.n_max(),
            eigenvalues: self.modes.iter().map(|m| m.0).collect(),
            growth: self.growth,
            limit_t4: self.limit_t4().ok(),
            limit_t2: self.limit_t2().ok(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LimitT1 {
    pub value: f64,
    /// sum_i nu(phi_i)^2 lambda_i^{-3}; the Theorem-1 limit is finite iff
    /// the full series converges.
    pub finiteness_diagnostic: f64,
}

#[derive(Serialize)]
pub struct BasisSummary {
    pub flavor: BoundaryFlavor,
    pub n_max: usize,
    pub eigenvalues: Vec<f64>,
    pub growth: GrowthBounds,
    pub limit_t4: Option<SeriesValue>,
    pub limit_t2: Option<SeriesValue>,
}

pub struct Eigenfunction<'a> {
    basis: &'a SpectralBasis,
    index: usize,
}

impl Eigenfunction<'_> {
    pub fn eval(&self, p: &Point) -> f64 {
        self.basis.phi(self.index, p)
    }

    pub fn deriv(&self, p: &Point) -> Result<f64> {
        self.basis.phi_prime(self.index, p)
    }
}

fn eval_mode(mode: &Mode, p: &Point) -> f64 {
    match mode {
        Mode::Constant => 1.0,
        Mode::Circle { k, trig, omega } => trig_factor(*k, *trig, *omega, p.x()),
        Mode::NeumannCos { k, omega } => trig_factor(*k, Trig::Cos, *omega, p.x()),
        Mode::DirichletSin { k, omega } => trig_factor(*k, Trig::Sin, *omega, p.x()),
        Mode::TorusProd { factors, omega } => factors
            .iter()
            .zip(p.coords())
            .map(|(&(k, trig), &x)| trig_factor(k, trig, *omega, x))
            .product(),
        Mode::Synthetic => panic!("synthetic basis has no eigenfunction evaluator"),
    }
}

fn trig_factor(k: u32, trig: Trig, omega: f64, x: f64) -> f64 {
    match trig {
        Trig::One => 1.0,
        Trig::Cos => std::f64::consts::SQRT_2 * (k as f64 * omega * x).cos(),
        Trig::Sin => std::f64::consts::SQRT_2 * (k as f64 * omega * x).sin(),
    }
}

/// Tail bound sum_{i > n} 2 / (c1 i^{2/d})^2 <= (2/c1^2) n^{1-4/d} / (4/d - 1).
fn power_tail(c1: f64, d_eff: f64, n: usize) -> f64 {
    let q = 4.0 / d_eff;
    2.0 / (c1 * c1) * (n as f64).powf(1.0 - q) / (q - 1.0)
}

/// All torus modes with eigenvalue below a complete-shell cutoff, sorted,
/// truncated to n_max. Tie-breaking: eigenvalue, then frequency vector
/// lexicographic, then cosine-before-sine flags.
fn torus_modes(dim: usize, omega: f64, n_max: usize) -> Vec<(f64, Mode)> {
    let mut kmax = 1usize;
    loop {
        let mut raw: Vec<(u64, Vec<(u32, Trig)>)> = Vec::new();
        let cutoff = (kmax * kmax) as u64;
        enumerate_freqs(dim, kmax as u32, cutoff, &mut Vec::new(), &mut raw);
        if raw.len() >= n_max {
            raw.sort_by(|a, b| {
                a.0.cmp(&b.0)
                    .then_with(|| freq_key(&a.1).cmp(&freq_key(&b.1)))
            });
            let mut modes = vec![(0.0, Mode::Constant)];
            modes.extend(raw.into_iter().take(n_max - 1).map(|(sq, factors)| {
                (sq as f64 * omega * omega, Mode::TorusProd { factors, omega })
            }));
            return modes;
        }
        kmax += 1;
    }
}

fn freq_key(factors: &[(u32, Trig)]) -> (Vec<u32>, Vec<u8>) {
    (
        factors.iter().map(|f| f.0).collect(),
        factors
            .iter()
            .map(|f| match f.1 {
                Trig::One => 0,
                Trig::Cos => 1,
                Trig::Sin => 2,
            })
            .collect(),
    )
}

fn enumerate_freqs(
    dims_left: usize,
    kmax: u32,
    cutoff: u64,
    prefix: &mut Vec<(u32, Trig)>,
    out: &mut Vec<(u64, Vec<(u32, Trig)>)>,
) {
    if dims_left == 0 {
        let sq: u64 = prefix.iter().map(|&(k, _)| (k as u64) * (k as u64)).sum();
        if sq > 0 && sq <= cutoff {
            out.push((sq, prefix.clone()));
        }
        return;
    }
    for k in 0..=kmax {
        if k == 0 {
            prefix.push((0, Trig::One));
            enumerate_freqs(dims_left - 1, kmax, cutoff, prefix, out);
            prefix.pop();
        } else {
            for trig in [Trig::Cos, Trig::Sin] {
                prefix.push((k, trig));
                enumerate_freqs(dims_left - 1, kmax, cutoff, prefix, out);
                prefix.pop();
            }
        }
    }
}

/// Integrate f dmu over a 1D space (normalized invariant measure).
pub fn quadrature_mu<F: Fn(f64) -> f64>(space: &Space, f: F) -> Result<f64> {
    match *space {
        Space::Circle { circumference } => {
            // periodic trapezoid rule: spectrally accurate for smooth integrands
            let n = 1 << 13;
            let h = circumference / n as f64;
            let sum: f64 = (0..n).map(|i| f(i as f64 * h)).sum();
            Ok(sum * h / circumference)
        }
        Space::Interval { length, .. } => {
            let n = 1 << 13;
            let h = length / n as f64;
            let mut sum = f(0.0) + f(length);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                sum += w * f(i as f64 * h);
            }
            Ok(sum * h / 3.0 / length)
        }
        _ => Err(Error::UnsupportedSpace("quadrature_mu is for circle/interval".into())),
    }
}

// ---------------------------------------------------------------------------
// Rate envelopes and scalar constants
// ---------------------------------------------------------------------------

/// Theorem-9 universal envelope xi_K(t) for K = beta + d/4.
pub fn xi_k(k_exponent: f64, t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::InvalidArgument("xi_K needs t > 0".into()));
    }
    if k_exponent < 1.0 {
        Ok(1.0 / t)
    } else if k_exponent == 1.0 {
        if t <= 1.0 {
            return Err(Error::InvalidArgument("log branch of xi_K needs t > 1".into()));
        }
        Ok(t.ln().powi(2) / t)
    } else {
        Ok(t.powf(-1.0 / (2.0 * k_exponent - 1.0)))
    }
}

/// gamma_d(t): rate envelope for (E[W_p^q])^{1/q} under the Nash-inequality
/// framework.
pub fn gamma_d(d: f64, t: f64) -> Result<f64> {
    if t <= 0.0 || d < 1.0 {
        return Err(Error::InvalidArgument("gamma_d needs d >= 1, t > 0".into()));
    }
    if d < 4.0 {
        Ok(t.powf(-0.5))
    } else if d == 4.0 {
        if t <= 1.0 {
            return Err(Error::InvalidArgument("log branch of gamma_d needs t > 1".into()));
        }
        Ok(t.powf(-0.5) * t.ln().sqrt())
    } else {
        Ok(t.powf(-1.0 / (d - 2.0)))
    }
}

/// Theorem-5 envelope for E[W_2(mu_t, mu)^2] (also Theorems 3 and 8).
pub fn rate_t5(d: u32, t: f64) -> Result<f64> {
    if t <= 0.0 || d == 0 {
        return Err(Error::InvalidArgument("rate_t5 needs d >= 1, t > 0".into()));
    }
    Ok(match d {
        1..=3 => 1.0 / t,
        4 => (t + 1.0).ln() / t,
        _ => t.powf(-2.0 / (d as f64 - 2.0)),
    })
}

/// d = 4 renormalization constant vol(M) / (8 pi^2).
pub fn limit_t6_d4(volume: f64) -> Result<f64> {
    if volume <= 0.0 {
        return Err(Error::InvalidArgument("volume must be positive".into()));
    }
    Ok(volume / (8.0 * PI * PI))
}

/// Five-case rate table for the degenerate diffusion on [0,1] with
/// boundary exponent l > 2 and order p >= 2.
pub fn example51_envelope(l: f64, p: f64, t: f64) -> Result<f64> {
    if l <= 2.0 || p < 2.0 || t <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "envelope needs l > 2, p >= 2, t > 0 (got l={l}, p={p}, t={t})"
        )));
    }
    let crit = (13.0 - l) / 4.0;
    let log2t = (2.0 + t).ln();
    Ok(if l <= 5.0 {
        if l < 5.0 && p < crit {
            1.0 / t
        } else if p == crit {
            log2t.powi(3) / t
        } else if p > crit {
            (log2t / t).powf(8.0 / (4.0 * p + l - 5.0))
        } else {
            // l = 5 exactly with p < 2 is outside the table; p >= 2 = crit here
            return Err(Error::InvalidArgument(format!(
                "parameters (l={l}, p={p}) outside the rate-table partition"
            )));
        }
    } else if p == 2.0 {
        t.powf(-4.0 / (l - 1.0)) * log2t.powi(2)
    } else {
        t.powf(-8.0 / (p * (l - 1.0)))
    })
}
