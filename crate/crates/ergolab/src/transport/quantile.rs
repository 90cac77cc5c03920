//! Exact one-dimensional transport through the quantile coupling:
//! W_p(mu1, mu2)^p = int_0^1 |F1^{-1}(u) - F2^{-1}(u)|^p du.
//!
//! Both empirical measures (piecewise-constant quantile) and grid densities
//! (piecewise-linear quantile) are represented exactly, so the cost integral
//! is a closed-form sum over merged breakpoints for every p >= 1.

use crate::error::{Error, Result};
use crate::sim::EmpiricalMeasure;
use crate::spaces::Space;
use crate::transport::{validate_order, DensityOnGrid, DistanceReport, Method, TransportInput};

/// A nondecreasing piecewise-linear quantile function on [0,1], stored as
/// (u, x) knots. Repeated u values encode jumps (support gaps), which carry
/// no mass and hence no cost.
#[derive(Clone, Debug)]
pub struct QuantileFn {
    knots: Vec<(f64, f64)>,
}

impl QuantileFn {
    pub fn from_input(input: &TransportInput<'_>) -> Result<Self> {
        match input {
            TransportInput::Empirical(m) => Self::from_empirical(m),
            TransportInput::Density(d) => Self::from_density(d),
        }
    }

    pub fn from_empirical(m: &EmpiricalMeasure) -> Result<Self> {
        if m.space.dim() != 1 {
            return Err(Error::UnsupportedSpace("quantile functions are one-dimensional".into()));
        }
        let mut atoms: Vec<(f64, f64)> = m
            .atoms
            .iter()
            .filter(|a| a.1 > 0.0)
            .map(|a| (a.0.x(), a.1))
            .collect();
        if atoms.is_empty() {
            return Err(Error::EmptyPath);
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut knots = Vec::with_capacity(2 * atoms.len());
        let mut cum = 0.0;
        for &(x, w) in &atoms {
            knots.push((cum, x));
            cum += w;
            knots.push((cum, x));
        }
        if let Some(last) = knots.last_mut() {
            last.0 = 1.0; // absorb rounding in the final cumulative weight
        }
        Ok(QuantileFn { knots })
    }

    pub fn from_density(d: &DensityOnGrid) -> Result<Self> {
        if d.space.dim() != 1 {
            return Err(Error::UnsupportedSpace("quantile functions are one-dimensional".into()));
        }
        let n = d.n_cells();
        let l = d.domain_length();
        let mut knots = Vec::with_capacity(n + 1);
        let mut cum = 0.0;
        knots.push((0.0, 0.0));
        for (i, &v) in d.values.iter().enumerate() {
            cum += v / n as f64;
            knots.push((cum.min(1.0), (i + 1) as f64 * l / n as f64));
        }
        knots.last_mut().unwrap().0 = 1.0;
        Ok(QuantileFn { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Build from presorted (u, x) knots spanning [0, 1].
    pub(crate) fn from_knots(knots: Vec<(f64, f64)>) -> Self {
        debug_assert!(knots.windows(2).all(|w| w[0].0 <= w[1].0));
        QuantileFn { knots }
    }

    /// Evaluate at u, using the segment that covers a neighborhood of u.
    /// Takes the left branch at jump points.
    pub fn eval(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let (a, b) = self.segment_around(u);
        lerp(a, b, u)
    }

    /// Right-limit evaluation: at a jump point, take the upper branch.
    pub fn eval_right(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let k = &self.knots;
        let idx = k.partition_point(|&(ku, _)| ku <= u).clamp(1, k.len() - 1);
        lerp(k[idx - 1], k[idx], u)
    }

    /// The knot pair bracketing u. Callers integrate over midpoints of
    /// positive-width intervals, where the bracket is never degenerate.
    fn segment_around(&self, u: f64) -> ((f64, f64), (f64, f64)) {
        let k = &self.knots;
        let idx = k.partition_point(|&(ku, _)| ku < u).clamp(1, k.len() - 1);
        (k[idx - 1], k[idx])
    }

    /// Exact integral over [0,1] of |q1 - q2|^p across merged breakpoints.
    pub fn cost(&self, other: &QuantileFn, p: f64) -> f64 {
        let mut us: Vec<f64> = self
            .knots
            .iter()
            .chain(other.knots.iter())
            .map(|&(u, _)| u)
            .collect();
        us.sort_by(f64::total_cmp);
        us.dedup();
        let mut total = 0.0;
        for w in us.windows(2) {
            let (u0, u1) = (w[0], w[1]);
            let du = u1 - u0;
            if du <= 0.0 {
                continue;
            }
            let um = 0.5 * (u0 + u1);
            let s1 = self.segment_around(um);
            let s2 = other.segment_around(um);
            let a = lerp(s1.0, s1.1, u0) - lerp(s2.0, s2.1, u0);
            let b = lerp(s1.0, s1.1, u1) - lerp(s2.0, s2.1, u1);
            total += segment_power_integral(a, b, du, p);
        }
        total
    }

    /// Exact variance of u -> q(u) - l*u over u in [0,1]; the squared
    /// circular W2 distance to the uniform measure on a circle of length l.
    pub fn variance_minus_linear(&self, l: f64) -> f64 {
        let mut first = 0.0;
        let mut second = 0.0;
        for w in self.knots.windows(2) {
            let (u0, x0) = w[0];
            let (u1, x1) = w[1];
            let du = u1 - u0;
            if du <= 0.0 {
                continue;
            }
            let g0 = x0 - l * u0;
            let g1 = x1 - l * u1;
            first += 0.5 * (g0 + g1) * du;
            // exact integral of a linear function squared
            second += du * (g0 * g0 + g0 * g1 + g1 * g1) / 3.0;
        }
        second - first * first
    }
}

fn lerp(a: (f64, f64), b: (f64, f64), u: f64) -> f64 {
    if b.0 <= a.0 {
        return a.1;
    }
    a.1 + (b.1 - a.1) * ((u - a.0) / (b.0 - a.0))
}

/// int_0^du |a + (b-a) s/du|^p ds in closed form via the antiderivative
/// |v|^p v / (p+1).
pub(crate) fn segment_power_integral(a: f64, b: f64, du: f64, p: f64) -> f64 {
    if du <= 0.0 {
        return 0.0;
    }
    let diff = b - a;
    if diff.abs() < 1e-14 * (a.abs() + b.abs() + 1e-300) {
        return 0.5 * (a.abs().powf(p) + b.abs().powf(p)) * du;
    }
    let g = |v: f64| v.abs().powf(p) * v / (p + 1.0);
    du * (g(b) - g(a)) / diff
}

/// Exact W_p on an interval or the confined line via the quantile coupling.
pub fn wp_line(mu1: &TransportInput<'_>, mu2: &TransportInput<'_>, p: f64) -> Result<DistanceReport> {
    validate_order(p)?;
    if mu1.space() != mu2.space() {
        return Err(Error::MismatchedSpaces);
    }
    match mu1.space() {
        Space::Interval { .. } | Space::ConfinedLine { .. } => {}
        _ => {
            return Err(Error::UnsupportedSpace(
                "wp_line needs an interval or confined-line space".into(),
            ))
        }
    }
    let q1 = QuantileFn::from_input(mu1)?;
    let q2 = QuantileFn::from_input(mu2)?;
    Ok(DistanceReport {
        p,
        value: q1.cost(&q2, p).max(0.0).powf(1.0 / p),
        method: Method::Exact1d,
        error_estimate: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_stream;
    use crate::sim::{occupation_measure, simulate_reflected_bm};
    use crate::spaces::{BoundaryCondition, Point};
    use rand::Rng;

    fn interval(l: f64) -> Space {
        Space::Interval { length: l, boundary: BoundaryCondition::Neumann }
    }

    fn dirac(space: Space, x: f64) -> EmpiricalMeasure {
        EmpiricalMeasure::from_atoms(space, vec![(Point::scalar(x), 1.0)], 1.0).unwrap()
    }

    fn atoms(space: Space, xs: &[f64]) -> EmpiricalMeasure {
        let w = 1.0 / xs.len() as f64;
        EmpiricalMeasure::from_atoms(
            space,
            xs.iter().map(|&x| (Point::scalar(x), w)).collect(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn two_diracs_all_orders() {
        let sp = interval(2.0);
        let a = dirac(sp, 0.3);
        let b = dirac(sp, 1.7);
        for p in [1.0, 1.5, 2.0, 3.0] {
            let r =
                wp_line(&TransportInput::Empirical(&a), &TransportInput::Empirical(&b), p).unwrap();
            assert!((r.value - 1.4).abs() < 1e-12, "p={p}: {}", r.value);
        }
    }

    #[test]
    fn bernoulli_vs_uniform_w1_quarter() {
        let sp = interval(1.0);
        let m = atoms(sp, &[0.0, 1.0]);
        let u = DensityOnGrid::uniform(sp, 64).unwrap();
        let r = wp_line(&TransportInput::Empirical(&m), &TransportInput::Density(&u), 1.0).unwrap();
        assert!((r.value - 0.25).abs() < 1e-12, "{}", r.value);
    }

    #[test]
    fn bernoulli_vs_uniform_w2() {
        let sp = interval(1.0);
        let m = atoms(sp, &[0.0, 1.0]);
        let u = DensityOnGrid::uniform(sp, 64).unwrap();
        let r = wp_line(&TransportInput::Empirical(&m), &TransportInput::Density(&u), 2.0).unwrap();
        // int_0^{1/2} u^2 du + int_{1/2}^1 (1-u)^2 du = 1/12
        assert!((r.value - (1.0f64 / 12.0).sqrt()).abs() < 1e-12, "{}", r.value);
    }

    #[test]
    fn identity_and_symmetry() {
        let sp = interval(3.0);
        let mut rng = replica_stream(31, 0);
        for _ in 0..50 {
            let xs: Vec<f64> = (0..10).map(|_| 3.0 * rng.gen::<f64>()).collect();
            let ys: Vec<f64> = (0..7).map(|_| 3.0 * rng.gen::<f64>()).collect();
            let a = atoms(sp, &xs);
            let b = atoms(sp, &ys);
            let ia = TransportInput::Empirical(&a);
            let ib = TransportInput::Empirical(&b);
            assert!(wp_line(&ia, &ia, 2.0).unwrap().value < 1e-12);
            let ab = wp_line(&ia, &ib, 2.0).unwrap().value;
            let ba = wp_line(&ib, &ia, 2.0).unwrap().value;
            assert!((ab - ba).abs() < 1e-12);
        }
    }

    #[test]
    fn triangle_inequality_sampled() {
        let sp = interval(1.0);
        let mut rng = replica_stream(32, 0);
        for p in [1.0, 2.0] {
            for _ in 0..200 {
                let make = |rng: &mut crate::rng::Stream| {
                    let xs: Vec<f64> = (0..6).map(|_| rng.gen::<f64>()).collect();
                    atoms(sp, &xs)
                };
                let (a, b, c) = (make(&mut rng), make(&mut rng), make(&mut rng));
                let d = |x: &EmpiricalMeasure, y: &EmpiricalMeasure| {
                    wp_line(&TransportInput::Empirical(x), &TransportInput::Empirical(y), p)
                        .unwrap()
                        .value
                };
                assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-10);
            }
        }
    }

    #[test]
    fn order_monotonicity() {
        let sp = interval(1.0);
        let mut rng = replica_stream(33, 0);
        for _ in 0..100 {
            let xs: Vec<f64> = (0..8).map(|_| rng.gen::<f64>()).collect();
            let ys: Vec<f64> = (0..5).map(|_| rng.gen::<f64>()).collect();
            let a = atoms(sp, &xs);
            let b = atoms(sp, &ys);
            let w = |p: f64| {
                wp_line(&TransportInput::Empirical(&a), &TransportInput::Empirical(&b), p)
                    .unwrap()
                    .value
            };
            let (w1, w2, w4) = (w(1.0), w(2.0), w(4.0));
            assert!(w1 <= w2 + 1e-12 && w2 <= w4 + 1e-12, "{w1} {w2} {w4}");
        }
    }

    #[test]
    fn mismatched_spaces_error() {
        let a = dirac(interval(1.0), 0.5);
        let b = dirac(interval(2.0), 0.5);
        assert!(matches!(
            wp_line(&TransportInput::Empirical(&a), &TransportInput::Empirical(&b), 1.0),
            Err(Error::MismatchedSpaces)
        ));
    }

    #[test]
    fn density_vs_density_shifted_blocks() {
        // density 2 on the left half vs 2 on the right half: W1 = 1/2
        let sp = interval(1.0);
        let n = 32;
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        for i in 0..n / 2 {
            left[i] = 2.0;
            right[n / 2 + i] = 2.0;
        }
        let d1 = DensityOnGrid::new(sp, left).unwrap();
        let d2 = DensityOnGrid::new(sp, right).unwrap();
        let r = wp_line(&TransportInput::Density(&d1), &TransportInput::Density(&d2), 1.0).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn refinement_in_h_on_frozen_path() {
        // halving h: the occupation measure of the coarser grid stays within
        // O(sqrt h) of a much finer reference in W2
        let sp = interval(std::f64::consts::PI);
        let fine =
            simulate_reflected_bm(&sp, &Point::scalar(1.0), 4.0, 1e-4, &mut replica_stream(34, 0))
                .unwrap();
        let occ_fine = occupation_measure(&fine).unwrap();
        let thin = |stride: usize| {
            let states: Vec<_> = fine.states.iter().step_by(stride).cloned().collect();
            let path = crate::sim::SamplePath {
                space: sp,
                h: 1e-4 * stride as f64,
                t: 4.0,
                states,
                survived: true,
                lifetime: 4.0,
            };
            occupation_measure(&path).unwrap()
        };
        let w = |m: &EmpiricalMeasure| {
            wp_line(&TransportInput::Empirical(m), &TransportInput::Empirical(&occ_fine), 2.0)
                .unwrap()
                .value
        };
        let (h1, h2): (f64, f64) = (0.02, 0.01);
        let (d1, d2) = (w(&thin(200)), w(&thin(100)));
        assert!(d2 <= d1 + 1e-12);
        // O(sqrt h) envelope with a generous constant
        assert!(d1 < 3.0 * h1.sqrt() && d2 < 3.0 * h2.sqrt(), "d1={d1} d2={d2}");
    }

    #[test]
    fn subsample_distance_bounded_by_max_step() {
        use crate::sim::subsample_measure;
        let sp = interval(std::f64::consts::PI);
        let mut rng = replica_stream(35, 0);
        let path = simulate_reflected_bm(&sp, &Point::scalar(1.0), 2.0, 1e-2, &mut rng).unwrap();
        let occ = occupation_measure(&path).unwrap();
        let sub = subsample_measure(&path, 20).unwrap();
        let w1 = wp_line(&TransportInput::Empirical(&sub), &TransportInput::Empirical(&occ), 1.0)
            .unwrap()
            .value;
        let max_gap = path
            .states
            .windows(2)
            .map(|w| (w[1].x() - w[0].x()).abs())
            .fold(0.0, f64::max);
        // moving each left endpoint to its block's subsample time crosses at
        // most t/N in time, so at most (t/N)/h consecutive steps
        let steps_per_block = (path.t / 20.0 / path.h).round();
        assert!(w1 <= steps_per_block * max_gap + 1e-12, "w1={w1}");
    }
}
