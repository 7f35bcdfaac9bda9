//! Independent numerical oracles used to cross-check the closed-form paths.
//!
//! Nothing in here reuses the formulas it verifies: the Bayes oracle works by
//! brute-force quadrature of the unnormalized log-linear density, gradients
//! are checked by central finite differences, and flows by closed-form
//! solutions of hand-built fields. Kept in the library (not test-only) so the
//! `verify` command can run the same suites outside the test harness.

use crate::error::{Result, VapoError};
use crate::homotopy::HomotopyParams;

/// Posterior summary produced by brute-force quadrature.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureStats {
    pub mean: f64,
    pub var: f64,
    pub log_z: f64,
}

/// Number of grid points used by the 1-D Bayes quadrature.
pub const QUAD_POINTS: usize = 100_001;
/// Grid half-width used by the 1-D Bayes quadrature.
pub const QUAD_HALF_WIDTH: f64 = 10.0;

/// Unnormalized log density of the conditional homotopy,
/// f(x) = log q(x) + t * log N(xbar; x, sigma^2), evaluated pointwise.
pub fn log_homotopy_numerator(params: &HomotopyParams, x: f64, xbar: f64, t: f64) -> f64 {
    let ln_2pi = 1.837_877_066_409_345_5;
    let om2 = params.omega * params.omega;
    let sg2 = params.sigma * params.sigma;
    let log_q = -0.5 * (ln_2pi + om2.ln()) - 0.5 * x * x / om2;
    let log_lik = -0.5 * (ln_2pi + sg2.ln()) - 0.5 * (xbar - x) * (xbar - x) / sg2;
    log_q + t * log_lik
}

/// Brute-force 1-D Bayes update on a uniform grid over [-10, 10]:
/// normalizes exp(f) by trapezoid quadrature and integrates moments.
pub fn bayes_quadrature_1d(params: &HomotopyParams, xbar: f64, t: f64) -> QuadratureStats {
    let n = QUAD_POINTS;
    let lo = -QUAD_HALF_WIDTH;
    let h = 2.0 * QUAD_HALF_WIDTH / (n - 1) as f64;
    // Shift by the max exponent before exponentiating.
    let mut logf = Vec::with_capacity(n);
    let mut fmax = f64::NEG_INFINITY;
    for i in 0..n {
        let x = lo + i as f64 * h;
        let v = log_homotopy_numerator(params, x, xbar, t);
        fmax = fmax.max(v);
        logf.push(v);
    }
    let w: Vec<f64> = logf.iter().map(|v| (v - fmax).exp()).collect();
    let z = trapezoid(&w, h);
    let mean_int: Vec<f64> = (0..n).map(|i| (lo + i as f64 * h) * w[i]).collect();
    let mean = trapezoid(&mean_int, h) / z;
    let var_int: Vec<f64> = (0..n)
        .map(|i| {
            let d = lo + i as f64 * h - mean;
            d * d * w[i]
        })
        .collect();
    let var = trapezoid(&var_int, h) / z;
    QuadratureStats {
        mean,
        var,
        log_z: z.ln() + fmax,
    }
}

/// Quadrature-normalized log density of the conditional homotopy at x.
pub fn bayes_log_density_1d(params: &HomotopyParams, x: f64, xbar: f64, t: f64) -> f64 {
    let q = bayes_quadrature_1d(params, xbar, t);
    log_homotopy_numerator(params, x, xbar, t) - q.log_z
}

/// Composite trapezoid rule with uniform spacing h.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    h * (0.5 * values[0] + inner + 0.5 * values[values.len() - 1])
}

/// Central finite difference of a scalar function of one coordinate.
pub fn central_diff(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central finite-difference gradient of f with respect to the entries of x.
pub fn fd_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut work = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = work[i];
        work[i] = orig + h;
        let up = f(&work);
        work[i] = orig - h;
        let dn = f(&work);
        work[i] = orig;
        grad.push((up - dn) / (2.0 * h));
    }
    grad
}

/// Max relative error between two vectors: max_i |a_i - b_i| / max(scale, |b_i|).
///
/// `scale` guards entries where the reference is near zero.
pub fn max_rel_err(a: &[f64], b: &[f64], scale: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / scale.max(y.abs()))
        .fold(0.0, f64::max)
}

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against a CDF.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &s) in samples.iter().enumerate() {
        let c = cdf(s);
        let hi = (i + 1) as f64 / n - c;
        let lo = c - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// CDF of the reciprocal (log-uniform) distribution on [eps, 1 + eps],
/// evaluated at s = t + eps.
pub fn reciprocal_cdf(eps: f64, s: f64) -> f64 {
    if s <= eps {
        return 0.0;
    }
    if s >= 1.0 + eps {
        return 1.0;
    }
    (s.ln() - eps.ln()) / ((1.0 + eps).ln() - eps.ln())
}

/// Asymptotic Kolmogorov-Smirnov critical value at significance alpha.
pub fn ks_critical_value(n: usize, alpha: f64) -> Result<f64> {
    let c = match alpha {
        a if (a - 0.01).abs() < 1e-12 => 1.627_62,
        a if (a - 0.05).abs() < 1e-12 => 1.358_10,
        a if (a - 0.10).abs() < 1e-12 => 1.224_39,
        _ => {
            return Err(VapoError::InvalidParam(format!(
                "no tabulated KS critical value for alpha = {alpha}"
            )))
        }
    };
    Ok(c / (n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_integrates_line() {
        // f(x) = x on [0, 1] -> 1/2.
        let n = 101;
        let h = 1.0 / (n - 1) as f64;
        let vals: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        assert!((trapezoid(&vals, h) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn quadrature_recovers_prior_at_t0() {
        let p = HomotopyParams::new(1.5, 0.7, 1e-4, 1).unwrap();
        let q = bayes_quadrature_1d(&p, 3.0, 0.0);
        assert!(q.mean.abs() < 1e-9);
        assert!((q.var - 2.25).abs() < 1e-8);
        assert!(q.log_z.abs() < 1e-9);
    }

    #[test]
    fn fd_gradient_of_quadratic() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let g = fd_gradient(f, &[1.0, -2.0, 0.5], 1e-5);
        let want = [2.0, -4.0, 1.0];
        assert!(max_rel_err(&g, &want, 1.0) < 1e-9);
    }

    #[test]
    fn ks_statistic_of_exact_grid_is_small() {
        // Stratified uniform draws against the uniform CDF.
        let n = 1000;
        let mut s: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&mut s, |x| x);
        assert!(d <= 0.5 / n as f64 + 1e-12);
    }

    #[test]
    fn reciprocal_cdf_endpoints() {
        assert_eq!(reciprocal_cdf(1e-4, 1e-4), 0.0);
        assert_eq!(reciprocal_cdf(1e-4, 1.0 + 1e-4), 1.0);
        let mid = reciprocal_cdf(1e-4, (1e-4f64 * (1.0 + 1e-4)).sqrt());
        assert!((mid - 0.5).abs() < 1e-12);
    }
}
