//! Small statistics toolbox: compensated summation, sample moments with
//! confidence intervals, Kolmogorov-Smirnov tests, and a chi-square
//! uniformity test.

/// Kahan-compensated sum. Aggregation across replicas is performed in a
/// fixed order so parallel runs stay bitwise reproducible.
pub fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

pub fn mean(values: &[f64]) -> f64 {
    kahan_sum(values) / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    assert!(n >= 2, "variance needs at least two samples");
    let m = mean(values);
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    kahan_sum(&sq) / (n - 1) as f64
}

/// Sample mean with a 95% normal-approximation confidence half-width.
/// Returns (mean, half_width); half_width is `None` for fewer than 2 samples.
pub fn mean_ci95(values: &[f64]) -> (f64, Option<f64>) {
    let m = mean(values);
    if values.len() < 2 {
        return (m, None);
    }
    let se = (variance(values) / values.len() as f64).sqrt();
    (m, Some(1.96 * se))
}

/// Survival function of the Kolmogorov distribution,
/// Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS statistic: sup |F1 - F2| over the pooled sample.
pub fn ks_statistic_two_sample(xs: &[f64], ys: &[f64]) -> f64 {
    let mut x = xs.to_vec();
    let mut y = ys.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    y.sort_by(|a, b| a.total_cmp(b));
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < x.len() || j < y.len() {
        // advance past the smallest remaining value, ties together
        let v = match (x.get(i), y.get(j)) {
            (Some(&xi), Some(&yj)) => xi.min(yj),
            (Some(&xi), None) => xi,
            (None, Some(&yj)) => yj,
            (None, None) => unreachable!(),
        };
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / nx - j as f64 / ny).abs());
    }
    d
}

/// Two-sample KS test with the asymptotic p-value
/// (Numerical Recipes effective-size correction).
pub fn ks_test_two_sample(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let d = ks_statistic_two_sample(xs, ys);
    let en = ((xs.len() * ys.len()) as f64 / (xs.len() + ys.len()) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    (d, kolmogorov_sf(lambda))
}

/// One-sample KS test of `xs` against the continuous CDF `cdf`.
pub fn ks_test_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> (f64, f64) {
    let mut x = xs.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        let f = cdf(xi);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    let en = n.sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    (d, kolmogorov_sf(lambda))
}

/// Chi-square statistic for uniformity of `xs` in [0, range) over `bins`
/// equal bins, together with its degrees of freedom.
pub fn chi2_uniform(xs: &[f64], range: f64, bins: usize) -> (f64, usize) {
    let mut counts = vec![0usize; bins];
    for &x in xs {
        let b = ((x / range * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let expected = xs.len() as f64 / bins as f64;
    let stat = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    (stat, bins - 1)
}

/// Upper critical value of the chi-square distribution.
pub fn chi2_critical(dof: usize, alpha: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(dof as f64).unwrap().inverse_cdf(1.0 - alpha)
}
