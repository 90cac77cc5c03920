//! Path simulators for the model diffusions and conversion of paths into
//! empirical measures.
//!
//! All generators follow the convention L = Delta (+ drift), so Brownian
//! steps carry variance 2h and the spectral eigenvalues are the true
//! exponential decay rates.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spaces::{BoundaryCondition, Point, Space};

/// A discretized trajectory on the uniform grid 0, h, 2h, ..., truncated at
/// the kill time for absorbed paths.
#[derive(Clone, Debug)]
pub struct SamplePath {
    pub space: Space,
    pub h: f64,
    /// Requested horizon.
    pub t: f64,
    pub states: Vec<Point>,
    pub survived: bool,
    /// Equals `t` when survived, else the kill grid time.
    pub lifetime: f64,
}

impl SamplePath {
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn last(&self) -> &Point {
        self.states.last().expect("paths hold at least the initial state")
    }
}

/// A weighted atomic measure on a model space.
#[derive(Clone, Debug)]
pub struct EmpiricalMeasure {
    pub space: Space,
    pub atoms: Vec<(Point, f64)>,
    /// Time horizon the measure was accumulated over.
    pub t: f64,
}

impl EmpiricalMeasure {
    pub fn from_atoms(space: Space, atoms: Vec<(Point, f64)>, t: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyPath);
        }
        if atoms.iter().any(|&(_, w)| w < 0.0) {
            return Err(Error::InvalidArgument("negative atom weight".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        // accumulation error grows with the atom count; renormalize exactly
        // once the sum is within that budget
        let budget = 1e-12_f64.max(64.0 * f64::EPSILON * atoms.len() as f64);
        if (total - 1.0).abs() > budget {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        let mut atoms = atoms;
        if total != 1.0 {
            for a in &mut atoms {
                a.1 /= total;
            }
        }
        Ok(EmpiricalMeasure { space, atoms, t })
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// Combine atoms at identical positions; sorts atoms lexicographically.
    pub fn merge_atoms(&mut self) {
        self.atoms
            .sort_by(|a, b| a.0.coords().iter().partial_cmp(b.0.coords().iter()).unwrap());
        let mut merged: Vec<(Point, f64)> = Vec::with_capacity(self.atoms.len());
        for (p, w) in self.atoms.drain(..) {
            match merged.last_mut() {
                Some(last) if last.0.coords() == p.coords() => last.1 += w,
                _ => merged.push((p, w)),
            }
        }
        self.atoms = merged;
    }

    /// Equal-weight mixture of several measures on the same space.
    pub fn mixture(measures: &[EmpiricalMeasure]) -> Result<EmpiricalMeasure> {
        let first = measures.first().ok_or(Error::EmptyPath)?;
        if measures.iter().any(|m| m.space != first.space) {
            return Err(Error::MismatchedSpaces);
        }
        let scale = 1.0 / measures.len() as f64;
        let atoms = measures
            .iter()
            .flat_map(|m| m.atoms.iter().map(move |&(ref p, w)| (p.clone(), w * scale)))
            .collect();
        let mut out = EmpiricalMeasure { space: first.space, atoms, t: first.t };
        out.merge_atoms();
        Ok(out)
    }

    /// Integral of a scalar function of the first coordinate.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().map(|(p, w)| w * f(p.x())).sum()
    }
}

fn grid_layout(t: f64, h: f64) -> Result<(usize, f64)> {
    if h <= 0.0 {
        return Err(Error::StepSize("h must be positive".into()));
    }
    if t < h {
        return Err(Error::InvalidArgument(format!("horizon t={t} below step h={h}")));
    }
    let n = (t / h).floor() as usize;
    let rem = t - n as f64 * h;
    Ok(if rem > 1e-9 * h.max(1.0) { (n + 1, rem) } else { (n, 0.0) })
}

fn step_size(i: usize, n: usize, h: f64, rem: f64) -> f64 {
    if rem > 0.0 && i == n - 1 {
        rem
    } else {
        h
    }
}

/// Brownian motion wrapped onto the circle or torus. Transitions are exact
/// in law: each coordinate increment is Normal(0, 2h) before wrapping.
pub fn simulate_wrapped_bm<R: Rng>(
    space: &Space,
    x0: &Point,
    t: f64,
    h: f64,
    rng: &mut R,
) -> Result<SamplePath> {
    simulate_wrapped_bm_scaled(space, x0, t, h, 1.0, rng)
}

/// Wrapped Brownian motion with a noise multiplier (0 freezes the path).
pub fn simulate_wrapped_bm_scaled<R: Rng>(
    space: &Space,
    x0: &Point,
    t: f64,
    h: f64,
    noise_scale: f64,
    rng: &mut R,
) -> Result<SamplePath> {
    match space {
        Space::Circle { .. } | Space::Torus { .. } => {}
        _ => return Err(Error::UnsupportedSpace("wrapped BM needs a circle or torus".into())),
    }
    if !space.contains(x0) {
        return Err(Error::Domain(format!("x0 {x0:?} outside the space")));
    }
    let (n, rem) = grid_layout(t, h)?;
    let mut states = Vec::with_capacity(n + 1);
    states.push(x0.clone());
    let mut coords: Vec<f64> = x0.coords().to_vec();
    for i in 0..n {
        let hs = step_size(i, n, h, rem);
        let sd = noise_scale * (2.0 * hs).sqrt();
        for c in coords.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *c += sd * z;
        }
        let p = space.canonical_point(&coords)?;
        coords.copy_from_slice(p.coords());
        states.push(p);
    }
    Ok(SamplePath { space: *space, h, t, states, survived: true, lifetime: t })
}

/// Reflected Brownian motion on a Neumann interval: Gaussian proposal with
/// variance 2h folded back into [0, l] by repeated reflection (exact in law).
pub fn simulate_reflected_bm<R: Rng>(
    space: &Space,
    x0: &Point,
    t: f64,
    h: f64,
    rng: &mut R,
) -> Result<SamplePath> {
    let length = match *space {
        Space::Interval { length, boundary: BoundaryCondition::Neumann } => length,
        _ => {
            return Err(Error::UnsupportedSpace(
                "reflected BM needs a Neumann interval".into(),
            ))
        }
    };
    if !space.contains(x0) {
        return Err(Error::Domain(format!("x0 {x0:?} outside [0, {length}]")));
    }
    let (n, rem) = grid_layout(t, h)?;
    let mut states = Vec::with_capacity(n + 1);
    states.push(x0.clone());
    let mut x = x0.x();
    for i in 0..n {
        let hs = step_size(i, n, h, rem);
        let z: f64 = rng.sample(StandardNormal);
        x = fold(x + (2.0 * hs).sqrt() * z, length);
        states.push(Point::scalar(x));
    }
    Ok(SamplePath { space: *space, h, t, states, survived: true, lifetime: t })
}

/// Fold a real number into [0, l] by reflection at both endpoints.
fn fold(x: f64, l: f64) -> f64 {
    let period = 2.0 * l;
    let mut r = x.rem_euclid(period);
    if r > l {
        r = period - r;
    }
    r
}

/// Brownian motion on a Dirichlet interval, killed at the boundary. Besides
/// the Euler grid check, each step applies the Brownian-bridge crossing
/// probability exp(-x1 x2 / h) per endpoint (variance-2 driving motion),
/// which removes the O(sqrt h) bias in the killing time.
pub fn simulate_killed_bm<R: Rng>(
    space: &Space,
    x0: &Point,
    t: f64,
    h: f64,
    rng: &mut R,
) -> Result<SamplePath> {
    let length = match *space {
        Space::Interval { length, boundary: BoundaryCondition::Dirichlet } => length,
        _ => {
            return Err(Error::UnsupportedSpace(
                "killed BM needs a Dirichlet interval".into(),
            ))
        }
    };
    let mut x = x0.x();
    if !(x > 0.0 && x < length) {
        return Err(Error::Domain(format!("x0 = {x} not in the open interval (0, {length})")));
    }
    let (n, rem) = grid_layout(t, h)?;
    let mut states = Vec::with_capacity(n + 1);
    states.push(x0.clone());
    for i in 0..n {
        let hs = step_size(i, n, h, rem);
        let z: f64 = rng.sample(StandardNormal);
        let y = x + (2.0 * hs).sqrt() * z;
        let killed_on_grid = y <= 0.0 || y >= length;
        let killed_by_bridge = !killed_on_grid && {
            let p_left = (-(x * y) / hs).exp();
            let p_right = (-((length - x) * (length - y)) / hs).exp();
            rng.gen::<f64>() < p_left || rng.gen::<f64>() < p_right
        };
        if killed_on_grid || killed_by_bridge {
            let lifetime = states.len() as f64 * h;
            return Ok(SamplePath { space: *space, h, t, states, survived: false, lifetime });
        }
        x = y;
        states.push(Point::scalar(x));
    }
    Ok(SamplePath { space: *space, h, t, states, survived: true, lifetime: t })
}

/// Confining potential V(x) = (1 + theta x^2)^tau and its derivatives.
pub fn confined_potential(theta: f64, tau: f64, x: f64) -> f64 {
    (1.0 + theta * x * x).powf(tau)
}

fn confined_v_prime(theta: f64, tau: f64, x: f64) -> f64 {
    2.0 * theta * tau * x * (1.0 + theta * x * x).powf(tau - 1.0)
}

fn confined_v_second(theta: f64, tau: f64, x: f64) -> f64 {
    let u = 1.0 + theta * x * x;
    2.0 * theta * tau * u.powf(tau - 2.0) * (u + 2.0 * theta * (tau - 1.0) * x * x)
}

/// Langevin diffusion dX = -V'(X) dt + sqrt(2) dW on the confined line.
pub fn simulate_langevin_line<R: Rng>(
    space: &Space,
    x0: &Point,
    t: f64,
    h: f64,
    rng: &mut R,
) -> Result<SamplePath> {
    simulate_langevin_line_scaled(space, x0, t, h, 1.0, rng)
}

pub fn simulate_langevin_line_scaled<R: Rng>(
    space: &Space,
    x0: &Point,
    t: f64,
    h: f64,
    noise_scale: f64,
    rng: &mut R,
) -> Result<SamplePath> {
    let (theta, tau) = match *space {
        Space::ConfinedLine { theta, tau } => (theta, tau),
        _ => return Err(Error::UnsupportedSpace("Langevin simulator needs the confined line".into())),
    };
    // effective support radius: where V - V(0) reaches ~42 (density e^-42)
    let radius = ((42.0f64.powf(1.0 / tau) - 1.0) / theta).sqrt();
    let guard = 4.0 * radius.max(1.0);
    let sup_v2 = (0..=1000)
        .map(|i| {
            let x = -1.5 * radius + 3.0 * radius * i as f64 / 1000.0;
            confined_v_second(theta, tau, x).abs()
        })
        .fold(0.0, f64::max);
    if h * sup_v2 >= 0.5 {
        return Err(Error::StepSize(format!(
            "h = {h} too large: h * sup|V''| = {:.3} >= 0.5",
            h * sup_v2
        )));
    }
    let (n, rem) = grid_layout(t, h)?;
    let mut states = Vec::with_capacity(n + 1);
    states.push(x0.clone());
    let mut x = x0.x();
    for i in 0..n {
        let hs = step_size(i, n, h, rem);
        let z: f64 = rng.sample(StandardNormal);
        x += -confined_v_prime(theta, tau, x) * hs + noise_scale * (2.0 * hs).sqrt() * z;
        if x.abs() > guard {
            return Err(Error::Blowup { value: x, guard });
        }
        states.push(Point::scalar(x));
    }
    Ok(SamplePath { space: *space, h, t, states, survived: true, lifetime: t })
}

/// Diffusion coefficient sqrt(2) {x(1-x)}^{l/2} of the degenerate example.
pub fn example51_diffusion_coeff(l: f64, x: f64) -> f64 {
    std::f64::consts::SQRT_2 * (x * (1.0 - x)).powf(l / 2.0)
}

/// Drift l {x(1-x)}^{l-1} (1-2x) of the degenerate example.
pub fn example51_drift(l: f64, x: f64) -> f64 {
    l * (x * (1.0 - x)).powf(l - 1.0) * (1.0 - 2.0 * x)
}

/// Degenerate diffusion on [0,1] with generator
/// {x(1-x)}^l d^2/dx^2 + l{x(1-x)}^{l-1}(1-2x) d/dx, uniform invariant law.
/// States are clamped to [h^2, 1-h^2]; the boundary is unattainable for
/// l > 2, so the clamp only guards floating-point underflow.
pub fn simulate_example51<R: Rng>(
    l: f64,
    x0: f64,
    t: f64,
    h: f64,
    rng: &mut R,
) -> Result<SamplePath> {
    if l <= 2.0 {
        return Err(Error::InvalidArgument(format!("boundary exponent l = {l} must exceed 2")));
    }
    if !(0.0 < x0 && x0 < 1.0) {
        return Err(Error::Domain(format!("x0 = {x0} not in (0, 1)")));
    }
    let space = Space::Interval { length: 1.0, boundary: BoundaryCondition::Neumann };
    let (n, rem) = grid_layout(t, h)?;
    let clamp = h * h;
    let mut states = Vec::with_capacity(n + 1);
    states.push(Point::scalar(x0));
    let mut x = x0;
    for i in 0..n {
        let hs = step_size(i, n, h, rem);
        let z: f64 = rng.sample(StandardNormal);
        x += example51_drift(l, x) * hs + example51_diffusion_coeff(l, x) * hs.sqrt() * z;
        x = x.clamp(clamp, 1.0 - clamp);
        states.push(Point::scalar(x));
    }
    Ok(SamplePath { space, h, t, states, survived: true, lifetime: t })
}

/// Left-endpoint Riemann discretization of mu_t = (1/t) int_0^t delta_{X_s} ds.
/// Killed paths yield the occupation measure up to the lifetime, renormalized.
pub fn occupation_measure(path: &SamplePath) -> Result<EmpiricalMeasure> {
    if path.states.is_empty() {
        return Err(Error::EmptyPath);
    }
    if path.states.len() == 1 {
        return EmpiricalMeasure::from_atoms(
            path.space,
            vec![(path.states[0].clone(), 1.0)],
            path.lifetime,
        );
    }
    // left endpoints: all states except the final one for surviving paths;
    // for killed paths every stored state is a left endpoint of a lived step
    let m = if path.survived { path.states.len() - 1 } else { path.states.len() };
    let horizon = path.lifetime;
    let atoms = path.states[..m]
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let next_time = if i + 1 == m && path.survived {
                horizon
            } else {
                (i + 1) as f64 * path.h
            };
            (p.clone(), (next_time - i as f64 * path.h) / horizon)
        })
        .collect();
    EmpiricalMeasure::from_atoms(path.space, atoms, horizon)
}

/// Discretized empirical measure mu_{t,N} = (1/N) sum_{i=1..N} delta_{X_{it/N}}.
pub fn subsample_measure(path: &SamplePath, n: usize) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::InvalidArgument("subsample count must be positive".into()));
    }
    if !path.survived {
        return Err(Error::InvalidArgument("subsampling needs a surviving path".into()));
    }
    let stride = path.t / n as f64;
    let steps_per = stride / path.h;
    if (steps_per - steps_per.round()).abs() > 1e-9 || steps_per.round() < 1.0 {
        return Err(Error::IncompatibleSubsample { n, stride, h: path.h });
    }
    let steps_per = steps_per.round() as usize;
    let w = 1.0 / n as f64;
    let atoms = (1..=n)
        .map(|i| {
            let idx = (i * steps_per).min(path.states.len() - 1);
            (path.states[idx].clone(), w)
        })
        .collect();
    EmpiricalMeasure::from_atoms(path.space, atoms, path.t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{aux_stream, replica_stream};
    use crate::spaces::sample_invariant;
    use crate::spectral::{quadrature_mu, SpectralBasis, DEFAULT_N_MAX};
    use crate::stats::{ks_test_one_sample, mean, variance};
    use std::f64::consts::PI;

    fn circle() -> Space {
        Space::Circle { circumference: 2.0 * PI }
    }

    fn neumann() -> Space {
        Space::Interval { length: PI, boundary: BoundaryCondition::Neumann }
    }

    fn dirichlet() -> Space {
        Space::Interval { length: PI, boundary: BoundaryCondition::Dirichlet }
    }

    #[test]
    fn one_step_increment_variance_is_2h() {
        let sp = circle();
        let h = 1e-3;
        let mut rng = replica_stream(11, 0);
        let incs: Vec<f64> = (0..100_000)
            .map(|_| {
                let p = simulate_wrapped_bm(&sp, &Point::scalar(3.0), h, h, &mut rng).unwrap();
                let d = p.states[1].x() - 3.0;
                // wrapping never triggers for steps this small
                d
            })
            .collect();
        let v = variance(&incs);
        // SE of the sample variance of a normal is sigma^2 sqrt(2/n)
        let se = 2.0 * h * (2.0 / incs.len() as f64).sqrt();
        assert!((v - 2.0 * h).abs() < 3.0 * se, "v = {v}");
        assert!(mean(&incs).abs() < 3.0 * (2.0 * h / incs.len() as f64).sqrt());
    }

    #[test]
    fn zero_noise_paths_are_frozen() {
        let sp = circle();
        let mut rng = replica_stream(1, 0);
        let p =
            simulate_wrapped_bm_scaled(&sp, &Point::scalar(1.0), 1.0, 0.01, 0.0, &mut rng).unwrap();
        assert!(p.states.iter().all(|s| s.x() == 1.0));

        let line = Space::ConfinedLine { theta: 1.0, tau: 1.0 };
        let p = simulate_langevin_line_scaled(&line, &Point::scalar(0.0), 1.0, 0.01, 0.0, &mut rng)
            .unwrap();
        assert!(p.states.iter().all(|s| s.x() == 0.0));
    }

    #[test]
    fn wrapped_bm_occupies_half_circle_evenly() {
        let sp = circle();
        let mut rng = replica_stream(2, 0);
        let path = simulate_wrapped_bm(&sp, &Point::scalar(0.0), 500.0, 0.01, &mut rng).unwrap();
        let occ = occupation_measure(&path).unwrap();
        let frac = occ.integrate(|x| if x < PI { 1.0 } else { 0.0 });
        assert!((frac - 0.5).abs() < 0.05, "half-circle occupation {frac}");
    }

    #[test]
    fn wrapped_bm_marginal_uniform_ks() {
        let sp = circle();
        let mut rng = aux_stream(3, 1);
        let ends: Vec<f64> = (0..2000)
            .map(|_| {
                let x0 = sample_invariant(&sp, &mut rng).unwrap();
                simulate_wrapped_bm(&sp, &x0, 2.0, 1e-3, &mut rng).unwrap().last().x()
            })
            .collect();
        let (_, p) = ks_test_one_sample(&ends, |x| sp.invariant_cdf(x).unwrap());
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn torus_paths_stay_canonical() {
        let sp = Space::Torus { dim: 2, side: 1.0 };
        let mut rng = replica_stream(4, 0);
        let path =
            simulate_wrapped_bm(&sp, &Point::new(&[0.3, 0.9]), 5.0, 1e-2, &mut rng).unwrap();
        assert!(path.states.iter().all(|s| sp.contains(s)));
    }

    #[test]
    fn reflected_bm_midpoint_symmetry_and_domain() {
        let sp = neumann();
        let mut rng = replica_stream(5, 0);
        let h = 1e-3;
        let steps: Vec<f64> = (0..50_000)
            .map(|_| {
                let p = simulate_reflected_bm(&sp, &Point::scalar(PI / 2.0), h, h, &mut rng).unwrap();
                p.states[1].x() - PI / 2.0
            })
            .collect();
        let se = (2.0 * h / steps.len() as f64).sqrt();
        assert!(mean(&steps).abs() < 3.0 * se);

        let path = simulate_reflected_bm(&sp, &Point::scalar(0.1), 20.0, 1e-2, &mut rng).unwrap();
        assert!(path.states.iter().all(|s| sp.contains(s)));
    }

    #[test]
    fn reflected_bm_quarter_occupation() {
        let sp = neumann();
        let mut rng = replica_stream(6, 0);
        let path = simulate_reflected_bm(&sp, &Point::scalar(1.0), 500.0, 1e-2, &mut rng).unwrap();
        let occ = occupation_measure(&path).unwrap();
        let frac = occ.integrate(|x| if x < PI / 4.0 { 1.0 } else { 0.0 });
        assert!((frac - 0.25).abs() < 0.05, "quarter occupation {frac}");
    }

    #[test]
    fn reflected_bm_marginal_uniform_ks() {
        let sp = neumann();
        let mut rng = aux_stream(7, 2);
        let ends: Vec<f64> = (0..2000)
            .map(|_| {
                let x0 = sample_invariant(&sp, &mut rng).unwrap();
                simulate_reflected_bm(&sp, &x0, 2.0, 1e-3, &mut rng).unwrap().last().x()
            })
            .collect();
        let (_, p) = ks_test_one_sample(&ends, |x| sp.invariant_cdf(x).unwrap());
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn killed_bm_rejects_boundary_start() {
        let sp = dirichlet();
        let mut rng = replica_stream(8, 0);
        assert!(simulate_killed_bm(&sp, &Point::scalar(0.0), 1.0, 1e-3, &mut rng).is_err());
        assert!(simulate_killed_bm(&sp, &Point::scalar(PI), 1.0, 1e-3, &mut rng).is_err());
    }

    #[test]
    fn killed_bm_near_boundary_start_dies_fast() {
        let sp = dirichlet();
        let mut rng = replica_stream(9, 0);
        let survivors = (0..2000)
            .filter(|_| {
                simulate_killed_bm(&sp, &Point::scalar(1e-4), 1.0, 1e-3, &mut rng)
                    .unwrap()
                    .survived
            })
            .count();
        assert!(survivors < 5, "survivors from the boundary: {survivors}");
    }

    #[test]
    fn killed_bm_survival_matches_heat_kernel() {
        let sp = dirichlet();
        let basis = SpectralBasis::for_space(&sp, DEFAULT_N_MAX).unwrap();
        let x0 = Point::scalar(PI / 2.0);
        let t = 2.0;
        let oracle = quadrature_mu(&sp, |y| basis.heat_kernel(t, &x0, &Point::scalar(y)).unwrap())
            .unwrap();
        let mut rng = replica_stream(10, 0);
        let n = 40_000;
        let survived = (0..n)
            .filter(|_| simulate_killed_bm(&sp, &x0, t, 1e-3, &mut rng).unwrap().survived)
            .count();
        let p_hat = survived as f64 / n as f64;
        assert!(
            (p_hat - oracle).abs() < 0.05 * oracle,
            "p_hat = {p_hat}, spectral oracle = {oracle}"
        );
    }

    #[test]
    fn killed_bm_decay_rate_is_ground_eigenvalue() {
        let sp = dirichlet();
        let mut rng = replica_stream(11, 0);
        let n = 30_000;
        let lifetimes: Vec<f64> = (0..n)
            .map(|_| simulate_killed_bm(&sp, &Point::scalar(PI / 2.0), 5.0, 1e-3, &mut rng)
                .unwrap()
                .lifetime)
            .collect();
        // least-squares slope of log S(t) over t in [1, 5]
        let ts: Vec<f64> = (0..=8).map(|i| 1.0 + 0.5 * i as f64).collect();
        let logs: Vec<f64> = ts
            .iter()
            .map(|&t| {
                let s = lifetimes.iter().filter(|&&l| l >= t).count() as f64 / n as f64;
                s.ln()
            })
            .collect();
        let tbar = mean(&ts);
        let lbar = mean(&logs);
        let slope: f64 = ts
            .iter()
            .zip(&logs)
            .map(|(t, l)| (t - tbar) * (l - lbar))
            .sum::<f64>()
            / ts.iter().map(|t| (t - tbar) * (t - tbar)).sum::<f64>();
        assert!((-slope - 1.0).abs() < 0.1, "fitted decay rate {}", -slope);
    }

    #[test]
    fn killed_bm_conditional_marginal_is_qsd() {
        // quasi-ergodicity concerns the bulk of the path: the state at t/2
        // conditioned on survival to t follows mu_0 = phi_0^2 mu, while the
        // endpoint follows the Yaglom limit phi_0 mu instead
        let sp = dirichlet();
        let mut rng = aux_stream(12, 3);
        let t = 3.0;
        let mut mids = Vec::with_capacity(10_000);
        while mids.len() < 10_000 {
            let p = simulate_killed_bm(&sp, &Point::scalar(PI / 2.0), t, 1e-3, &mut rng).unwrap();
            if p.survived {
                mids.push(p.states[p.states.len() / 2].x());
            }
        }
        // mu_0 CDF on (0, pi): (x - sin(2x)/2) / pi
        let (_, pval) = ks_test_one_sample(&mids, |x| (x - (2.0 * x).sin() / 2.0) / PI);
        assert!(pval > 0.01, "KS p = {pval}");
    }

    #[test]
    fn langevin_ou_case_matches_quadrature_variance() {
        let sp = Space::ConfinedLine { theta: 1.0, tau: 1.0 };
        let z = quadrature(|x| (-confined_potential(1.0, 1.0, x)).exp());
        let target = quadrature(|x| x * x * (-confined_potential(1.0, 1.0, x)).exp()) / z;
        assert!((target - 0.5).abs() < 1e-10); // density is N(0, 1/2)

        let mut rng = aux_stream(13, 4);
        let ends: Vec<f64> = (0..4000)
            .map(|_| {
                let x0 = sample_invariant(&sp, &mut rng).unwrap();
                simulate_langevin_line(&sp, &x0, 1.0, 1e-3, &mut rng).unwrap().last().x()
            })
            .collect();
        let v = variance(&ends);
        let se = target * (2.0 / ends.len() as f64).sqrt();
        assert!((v - target).abs() < 3.0 * se, "variance {v} vs {target}");
        let (_, p) = ks_test_one_sample(&ends, |x| sp.invariant_cdf(x).unwrap());
        assert!(p > 0.01, "KS p = {p}");
    }

    fn quadrature<F: Fn(f64) -> f64>(f: F) -> f64 {
        let (a, b, n) = (-8.0, 8.0, 1 << 14);
        let h = (b - a) / n as f64;
        let mut s = (f(a) + f(b)) / 2.0;
        for i in 1..n {
            s += f(a + i as f64 * h);
        }
        s * h
    }

    #[test]
    fn langevin_drift_confines_large_starts() {
        let sp = Space::ConfinedLine { theta: 1.0, tau: 1.0 };
        let mut rng = replica_stream(14, 0);
        let h = 1e-3;
        let steps: Vec<f64> = (0..2000)
            .map(|_| {
                simulate_langevin_line(&sp, &Point::scalar(5.0), h, h, &mut rng).unwrap().last().x()
                    - 5.0
            })
            .collect();
        assert!(mean(&steps) < 0.0);
    }

    #[test]
    fn langevin_rejects_oversized_step() {
        let sp = Space::ConfinedLine { theta: 4.0, tau: 2.0 };
        let mut rng = replica_stream(15, 0);
        match simulate_langevin_line(&sp, &Point::scalar(0.0), 1.0, 0.5, &mut rng) {
            Err(Error::StepSize(_)) => {}
            other => panic!("expected step-size error, got {other:?}"),
        }
    }

    #[test]
    fn example51_coefficients_closed_form() {
        let c = example51_diffusion_coeff(3.0, 0.5);
        assert!((c - std::f64::consts::SQRT_2 / 8.0).abs() < 1e-15);
        assert_eq!(example51_drift(3.0, 0.5), 0.0);
        assert!(example51_drift(3.0, 0.8) < 0.0);
    }

    #[test]
    fn example51_symmetric_mean() {
        let mut rng = replica_stream(16, 0);
        let ends: Vec<f64> = (0..3000)
            .map(|_| simulate_example51(3.0, 0.5, 1.0, 1e-3, &mut rng).unwrap().last().x())
            .collect();
        let se = (variance(&ends) / ends.len() as f64).sqrt();
        assert!((mean(&ends) - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn example51_marginal_uniform_ks() {
        let mut rng = aux_stream(17, 5);
        let ends: Vec<f64> = (0..1500)
            .map(|_| {
                let x0 = 0.5 + 0.999 * (rng.gen::<f64>() - 0.5);
                simulate_example51(3.0, x0, 2.0, 1e-3, &mut rng).unwrap().last().x()
            })
            .collect();
        let (_, p) = ks_test_one_sample(&ends, |x| x.clamp(0.0, 1.0));
        assert!(p > 0.05, "KS p = {p}");
    }

    #[test]
    fn example51_boundary_is_sticky() {
        let mut rng = replica_stream(18, 0);
        let path = simulate_example51(3.0, 0.02, 100.0, 1e-3, &mut rng).unwrap();
        let occ = occupation_measure(&path).unwrap();
        let frac = occ.integrate(|x| if x <= 0.05 { 1.0 } else { 0.0 });
        assert!(frac > 0.05, "near-boundary occupation {frac}");
    }

    #[test]
    fn occupation_of_frozen_path_is_dirac() {
        let sp = circle();
        let mut rng = replica_stream(19, 0);
        let p = simulate_wrapped_bm_scaled(&sp, &Point::scalar(2.0), 1.0, 0.1, 0.0, &mut rng)
            .unwrap();
        let mut occ = occupation_measure(&p).unwrap();
        occ.merge_atoms();
        assert_eq!(occ.atoms.len(), 1);
        assert!((occ.atoms[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn occupation_two_step_weights() {
        let sp = circle();
        let mut rng = replica_stream(20, 0);
        let p = simulate_wrapped_bm(&sp, &Point::scalar(0.0), 0.2, 0.1, &mut rng).unwrap();
        let occ = occupation_measure(&p).unwrap();
        assert_eq!(occ.atoms.len(), 2);
        assert!(occ.atoms.iter().all(|a| (a.1 - 0.5).abs() < 1e-12));
    }

    #[test]
    fn occupation_weights_sum_to_one_with_partial_step() {
        let sp = circle();
        let mut rng = replica_stream(21, 0);
        let p = simulate_wrapped_bm(&sp, &Point::scalar(0.0), 0.25, 0.1, &mut rng).unwrap();
        let occ = occupation_measure(&p).unwrap();
        assert!((occ.total_weight() - 1.0).abs() < 1e-12);
        assert_eq!(occ.atoms.len(), 3);
        assert!((occ.atoms[2].1 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn occupation_of_killed_path_renormalizes() {
        let sp = dirichlet();
        let mut rng = replica_stream(22, 0);
        let path = loop {
            let p = simulate_killed_bm(&sp, &Point::scalar(0.3), 5.0, 1e-2, &mut rng).unwrap();
            if !p.survived {
                break p;
            }
        };
        let occ = occupation_measure(&path).unwrap();
        assert!((occ.total_weight() - 1.0).abs() < 1e-12);
        assert_eq!(occ.atoms.len(), path.states.len());
    }

    #[test]
    fn subsample_n1_is_endpoint_dirac() {
        let sp = circle();
        let mut rng = replica_stream(23, 0);
        let p = simulate_wrapped_bm(&sp, &Point::scalar(0.0), 1.0, 0.01, &mut rng).unwrap();
        let m = subsample_measure(&p, 1).unwrap();
        assert_eq!(m.atoms.len(), 1);
        assert_eq!(m.atoms[0].0.x(), p.last().x());
    }

    #[test]
    fn subsample_full_grid_matches_occupation_atoms() {
        let sp = circle();
        let mut rng = replica_stream(24, 0);
        let p = simulate_wrapped_bm(&sp, &Point::scalar(0.0), 1.0, 0.1, &mut rng).unwrap();
        let full = subsample_measure(&p, 10).unwrap();
        let occ = occupation_measure(&p).unwrap();
        // same atoms up to the endpoint convention (left vs right ends)
        for (s, o) in full.atoms.iter().zip(occ.atoms.iter().skip(1)) {
            assert_eq!(s.0.x(), o.0.x());
        }
    }

    #[test]
    fn subsample_rejects_incompatible_grid() {
        let sp = circle();
        let mut rng = replica_stream(25, 0);
        let p = simulate_wrapped_bm(&sp, &Point::scalar(0.0), 1.0, 0.1, &mut rng).unwrap();
        match subsample_measure(&p, 7) {
            Err(Error::IncompatibleSubsample { n: 7, .. }) => {}
            other => panic!("expected incompatibility, got {other:?}"),
        }
    }

    #[test]
    fn paths_are_bitwise_deterministic() {
        let sp = circle();
        let a = simulate_wrapped_bm(&sp, &Point::scalar(1.0), 2.0, 1e-2, &mut replica_stream(42, 7))
            .unwrap();
        let b = simulate_wrapped_bm(&sp, &Point::scalar(1.0), 2.0, 1e-2, &mut replica_stream(42, 7))
            .unwrap();
        assert!(a
            .states
            .iter()
            .zip(&b.states)
            .all(|(x, y)| x.coords() == y.coords()));
        let c = simulate_wrapped_bm(&sp, &Point::scalar(1.0), 2.0, 1e-2, &mut replica_stream(42, 8))
            .unwrap();
        assert!(a.states.iter().zip(&c.states).any(|(x, y)| x.coords() != y.coords()));
    }

    #[test]
    fn mixture_merges_and_normalizes() {
        let sp = circle();
        let m1 = EmpiricalMeasure::from_atoms(sp, vec![(Point::scalar(1.0), 1.0)], 1.0).unwrap();
        let m2 = EmpiricalMeasure::from_atoms(
            sp,
            vec![(Point::scalar(1.0), 0.5), (Point::scalar(2.0), 0.5)],
            1.0,
        )
        .unwrap();
        let mix = EmpiricalMeasure::mixture(&[m1, m2]).unwrap();
        assert_eq!(mix.atoms.len(), 2);
        assert!((mix.atoms[0].1 - 0.75).abs() < 1e-12);
        assert!((mix.total_weight() - 1.0).abs() < 1e-12);
    }
}
