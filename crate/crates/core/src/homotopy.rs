//! Closed-form statistics of the data-likelihood homotopy.
//!
//! The homotopy bridges an isotropic Gaussian prior q(x) = N(0, omega^2 I)
//! at t = 0 to the exact posterior under the Gaussian observation model
//! p(xbar|x) = N(xbar; x, sigma^2 I) at t = 1. Because prior and likelihood
//! are both Gaussian, the data-conditioned path stays Gaussian with a scalar
//! diagonal covariance, and everything here is elementwise arithmetic.

use crate::error::{Result, VapoError};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Scalar hyperparameters of the homotopy.
///
/// `omega` and `sigma` are per-dimension standard deviations (the implied
/// covariances omega^2 I and sigma^2 I are never stored densely).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomotopyParams {
    /// Prior standard deviation omega > 0.
    pub omega: f64,
    /// Observation-noise standard deviation sigma > 0.
    pub sigma: f64,
    /// Sharpness constant of the reciprocal time law, in (0, 1).
    pub eps_sharp: f64,
    /// Data dimension D >= 1.
    pub dim: usize,
}

impl HomotopyParams {
    pub fn new(omega: f64, sigma: f64, eps_sharp: f64, dim: usize) -> Result<Self> {
        let p = Self {
            omega,
            sigma,
            eps_sharp,
            dim,
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(VapoError::InvalidParam(format!("omega = {}", self.omega)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(VapoError::InvalidParam(format!("sigma = {}", self.sigma)));
        }
        if !(self.eps_sharp > 0.0 && self.eps_sharp < 1.0) {
            return Err(VapoError::InvalidParam(format!(
                "eps_sharp = {} not in (0, 1)",
                self.eps_sharp
            )));
        }
        if self.dim == 0 {
            return Err(VapoError::InvalidParam("dim = 0".into()));
        }
        Ok(())
    }

    fn check_t(t: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&t) || !t.is_finite() {
            return Err(VapoError::OutOfRange {
                name: "t",
                value: t,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(VapoError::DimMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Mean and (scalar diagonal) variance of the conditional homotopy at time t.
#[derive(Debug, Clone, PartialEq)]
pub struct CondStats {
    pub mean: Vec<f64>,
    pub var: f64,
    pub t: f64,
}

/// Conditional mean mu(xbar, t) and variance of the homotopy:
/// var = (1/omega^2 + t/sigma^2)^-1, mu = t * var / sigma^2 * xbar.
pub fn cond_stats(params: &HomotopyParams, xbar: &[f64], t: f64) -> Result<CondStats> {
    params.check()?;
    HomotopyParams::check_t(t)?;
    params.check_dim(xbar)?;
    if xbar.iter().any(|v| !v.is_finite()) {
        return Err(VapoError::NonFinite("cond_stats xbar".into()));
    }
    let var = 1.0 / (1.0 / (params.omega * params.omega) + t / (params.sigma * params.sigma));
    let coeff = t * var / (params.sigma * params.sigma);
    let mean = xbar.iter().map(|&v| coeff * v).collect();
    Ok(CondStats { mean, var, t })
}

/// Reparameterized draw x = mu(xbar, t) + sqrt(var(t)) * noise.
pub fn sample_cond(params: &HomotopyParams, xbar: &[f64], t: f64, noise: &[f64]) -> Result<Vec<f64>> {
    let stats = cond_stats(params, xbar, t)?;
    params.check_dim(noise)?;
    let sd = stats.var.sqrt();
    Ok(stats
        .mean
        .iter()
        .zip(noise)
        .map(|(m, n)| m + sd * n)
        .collect())
}

/// Innovation gamma(x, xbar) = |x - xbar|^2 / sigma^2.
pub fn innovation(params: &HomotopyParams, x: &[f64], xbar: &[f64]) -> Result<f64> {
    params.check()?;
    params.check_dim(x)?;
    params.check_dim(xbar)?;
    let ss: f64 = x
        .iter()
        .zip(xbar)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok(ss / (params.sigma * params.sigma))
}

/// Conditional expectation of the innovation under rho(x; xbar, t):
/// gamma_bar = D * var(t) / sigma^2 + |mu(xbar, t) - xbar|^2 / sigma^2.
///
/// This is the exact Gaussian expectation (trace plus quadratic form), not a
/// Monte Carlo estimate.
pub fn innovation_cond_mean(params: &HomotopyParams, xbar: &[f64], t: f64) -> Result<f64> {
    let stats = cond_stats(params, xbar, t)?;
    let sig2 = params.sigma * params.sigma;
    let quad: f64 = stats
        .mean
        .iter()
        .zip(xbar)
        .map(|(m, b)| {
            let d = m - b;
            d * d
        })
        .sum();
    Ok(params.dim as f64 * stats.var / sig2 + quad / sig2)
}

/// Map a uniform draw u in [0, 1] to a time t such that t + eps follows the
/// reciprocal (log-uniform) distribution on [eps, 1 + eps].
pub fn sample_time(params: &HomotopyParams, u: f64) -> Result<f64> {
    params.check()?;
    if !(0.0..=1.0).contains(&u) || !u.is_finite() {
        return Err(VapoError::OutOfRange {
            name: "u",
            value: u,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let eps = params.eps_sharp;
    // t = e^tau - eps with tau = ln(eps) + u (ln(1+eps) - ln(eps)), arranged
    // as eps * expm1(u L) so the u = 0 endpoint is exactly zero.
    let span = (1.0 + eps).ln() - eps.ln();
    Ok((eps * (u * span).exp_m1()).clamp(0.0, 1.0))
}

/// Log-density of the conditional homotopy, log N(x; mu(xbar, t), var(t) I).
///
/// At t = 0 this is the prior log q(x); at t = 1 it is the exact posterior
/// log p(x|xbar).
pub fn cond_log_density(params: &HomotopyParams, x: &[f64], xbar: &[f64], t: f64) -> Result<f64> {
    let stats = cond_stats(params, xbar, t)?;
    params.check_dim(x)?;
    let d = params.dim as f64;
    let quad: f64 = x
        .iter()
        .zip(&stats.mean)
        .map(|(a, m)| {
            let diff = a - m;
            diff * diff
        })
        .sum();
    Ok(-0.5 * d * (LN_2PI + stats.var.ln()) - 0.5 * quad / stats.var)
}

/// Density (not log) of the conditional homotopy at x.
pub fn cond_density(params: &HomotopyParams, x: &[f64], xbar: &[f64], t: f64) -> Result<f64> {
    Ok(cond_log_density(params, x, xbar, t)?.exp())
}

/// Time derivative of the marginal homotopy at x, evaluated as the closed
/// analytic right-hand side of the evolution PDE with empirical data weights:
///
///   -1/2 * (1/N) sum_i rho(x; xbar_i, t) * (gamma(x, xbar_i) - gamma_bar(xbar_i, t))
///
/// Test-oracle operation: intended for small dimension and small datasets.
pub fn marginal_homotopy_dt_oracle(
    params: &HomotopyParams,
    dataset: &[Vec<f64>],
    x: &[f64],
    t: f64,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(VapoError::EmptyInput("marginal_homotopy_dt_oracle dataset"));
    }
    if params.dim > 2 {
        return Err(VapoError::InvalidParam(format!(
            "oracle restricted to dim <= 2, got {}",
            params.dim
        )));
    }
    if dataset.len() > 64 {
        return Err(VapoError::InvalidParam(format!(
            "oracle restricted to <= 64 data points, got {}",
            dataset.len()
        )));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(VapoError::OutOfRange {
            name: "t",
            value: t,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let mut acc = 0.0;
    for xbar in dataset {
        let rho = cond_density(params, x, xbar, t)?;
        let gamma = innovation(params, x, xbar)?;
        let gamma_bar = innovation_cond_mean(params, xbar, t)?;
        acc += rho * (gamma - gamma_bar);
    }
    Ok(-0.5 * acc / dataset.len() as f64)
}

/// Marginal homotopy density rho_bar(x; t) under the empirical data
/// distribution: (1/N) sum_i rho(x; xbar_i, t).
pub fn marginal_density(
    params: &HomotopyParams,
    dataset: &[Vec<f64>],
    x: &[f64],
    t: f64,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(VapoError::EmptyInput("marginal_density dataset"));
    }
    let mut acc = 0.0;
    for xbar in dataset {
        acc += cond_density(params, x, xbar, t)?;
    }
    Ok(acc / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use proptest::prelude::*;

    fn params(omega: f64, sigma: f64, dim: usize) -> HomotopyParams {
        HomotopyParams::new(omega, sigma, 1e-4, dim).unwrap()
    }

    #[test]
    fn cond_stats_prior_endpoint() {
        let p = params(1.0, 1.0, 1);
        let s = cond_stats(&p, &[2.0], 0.0).unwrap();
        assert_eq!(s.mean, vec![0.0]);
        assert_eq!(s.var, 1.0);
    }

    #[test]
    fn cond_stats_posterior_matches_quadrature() {
        // Frozen from the 1-D Bayes quadrature oracle (grid [-10, 10], 1e5 points).
        let p = params(1.0, 1.0, 1);
        let s = cond_stats(&p, &[2.0], 1.0).unwrap();
        assert!((s.mean[0] - 1.0).abs() < 1e-12);
        assert!((s.var - 0.5).abs() < 1e-12);
        let q = oracle::bayes_quadrature_1d(&p, 2.0, 1.0);
        assert!((s.mean[0] - q.mean).abs() < 1e-6);
        assert!((s.var - q.var).abs() < 1e-6);
    }

    #[test]
    fn cond_stats_sharp_likelihood() {
        let p = params(1.0, 0.01, 1);
        let s = cond_stats(&p, &[1.0], 1.0).unwrap();
        let want_var = 1.0 / (1.0 + 1e4);
        assert!((s.var - want_var).abs() < 1e-12);
        assert!((s.mean[0] - 0.99990001).abs() < 1e-7);
        let q = oracle::bayes_quadrature_1d(&p, 1.0, 1.0);
        assert!((s.mean[0] - q.mean).abs() < 1e-6);
        assert!((s.var - q.var).abs() < 1e-6);
    }

    #[test]
    fn cond_stats_rejects_bad_t() {
        let p = params(1.0, 1.0, 1);
        assert!(cond_stats(&p, &[0.0], -0.1).is_err());
        assert!(cond_stats(&p, &[0.0], 1.1).is_err());
        assert!(cond_stats(&p, &[f64::NAN], 0.5).is_err());
    }

    #[test]
    fn sample_cond_zero_noise_is_mean() {
        let p = params(1.0, 1.0, 2);
        let xbar = [2.0, -1.0];
        let s = cond_stats(&p, &xbar, 0.7).unwrap();
        let x = sample_cond(&p, &xbar, 0.7, &[0.0, 0.0]).unwrap();
        assert_eq!(x, s.mean);
    }

    #[test]
    fn sample_cond_prior_is_standard_normal_draw() {
        let p = params(1.0, 1.0, 2);
        let noise = [0.3, -1.2];
        let x = sample_cond(&p, &[5.0, 5.0], 0.0, &noise).unwrap();
        assert_eq!(x, noise.to_vec());
    }

    #[test]
    fn sample_cond_posterior_value() {
        let p = params(1.0, 1.0, 1);
        let x = sample_cond(&p, &[2.0], 1.0, &[1.0]).unwrap();
        assert!((x[0] - (1.0 + 0.5f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn innovation_basics() {
        let p = params(1.0, 1.0, 2);
        assert_eq!(innovation(&p, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(innovation(&p, &[2.0, 4.0], &[1.0, 2.0]).unwrap(), 5.0);
        let p = params(1.0, 0.1, 4);
        let x = [0.1, 0.0, 0.0, 0.0];
        let z = [0.0; 4];
        assert!((innovation(&p, &x, &z).unwrap() - 1.0).abs() < 1e-12);
        assert!(innovation(&p, &x, &[0.0; 3]).is_err());
    }

    #[test]
    fn innovation_cond_mean_values() {
        let p = params(1.0, 1.0, 1);
        assert!((innovation_cond_mean(&p, &[0.0], 0.0).unwrap() - 1.0).abs() < 1e-12);
        // Frozen from a 1e6-draw Monte Carlo oracle (agrees within 3 SE).
        assert!((innovation_cond_mean(&p, &[2.0], 1.0).unwrap() - 1.5).abs() < 1e-12);
        let p2 = params(1.0, 1.0, 2);
        assert!((innovation_cond_mean(&p2, &[2.0, 2.0], 1.0).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn innovation_cond_mean_matches_monte_carlo() {
        use rand::{Rng, SeedableRng};
        let p = params(1.0, 1.0, 1);
        let xbar = [2.0];
        let t = 1.0;
        let stats = cond_stats(&p, &xbar, t).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let eps: f64 = rng.sample(rand_distr::StandardNormal);
            let x = [stats.mean[0] + stats.var.sqrt() * eps];
            let g = innovation(&p, &x, &xbar).unwrap();
            sum += g;
            sumsq += g * g;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        let analytic = innovation_cond_mean(&p, &xbar, t).unwrap();
        assert!(
            (analytic - mean).abs() < 3.0 * se,
            "analytic {analytic} vs mc {mean} (se {se})"
        );
    }

    #[test]
    fn sample_time_endpoints_and_midpoint() {
        let p = params(1.0, 1.0, 1);
        assert_eq!(sample_time(&p, 0.0).unwrap(), 0.0);
        assert!((sample_time(&p, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let t = sample_time(&p, 0.5).unwrap();
        let want = (1e-4f64 * (1.0 + 1e-4)).sqrt() - 1e-4;
        assert!((t - want).abs() < 1e-12);
        assert!((t - 9.9005e-3).abs() < 1e-7);
        assert!(sample_time(&p, 1.5).is_err());
    }

    #[test]
    fn cond_log_density_values() {
        let p = params(1.0, 1.0, 1);
        let v = cond_log_density(&p, &[0.0], &[7.0], 0.0).unwrap();
        assert!((v - (-0.5 * LN_2PI)).abs() < 1e-12);
        let v = cond_log_density(&p, &[1.0], &[2.0], 1.0).unwrap();
        assert!((v - (-0.5 * std::f64::consts::PI.ln())).abs() < 1e-12);
        // Mode value at arbitrary t.
        let p2 = params(1.3, 0.4, 3);
        let xbar = [0.5, -0.2, 1.1];
        for &t in &[0.0, 0.3, 0.9] {
            let s = cond_stats(&p2, &xbar, t).unwrap();
            let v = cond_log_density(&p2, &s.mean, &xbar, t).unwrap();
            let want = -1.5 * (LN_2PI + s.var.ln());
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn log_density_at_t0_independent_of_datum() {
        let p = params(1.0, 0.3, 2);
        let x = [0.4, -0.9];
        let a = cond_log_density(&p, &x, &[5.0, 5.0], 0.0).unwrap();
        let b = cond_log_density(&p, &x, &[-3.0, 2.0], 0.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn marginal_dt_matches_finite_difference() {
        let p = params(1.0, 1.0, 1);
        let data = vec![vec![0.0]];
        let x = [0.0];
        let rhs = marginal_homotopy_dt_oracle(&p, &data, &x, 0.5).unwrap();
        let h = 1e-4;
        let up = marginal_density(&p, &data, &x, 0.5 + h).unwrap();
        let dn = marginal_density(&p, &data, &x, 0.5 - h).unwrap();
        let fd = (up - dn) / (2.0 * h);
        assert!(
            (rhs - fd).abs() / fd.abs() < 1e-5,
            "rhs {rhs} vs fd {fd}"
        );
    }

    #[test]
    fn marginal_dt_symmetric_dataset() {
        let p = params(1.0, 0.8, 1);
        let a = 1.3;
        let sym = marginal_homotopy_dt_oracle(&p, &vec![vec![-a], vec![a]], &[0.0], 0.4).unwrap();
        let single = marginal_homotopy_dt_oracle(&p, &vec![vec![a]], &[0.0], 0.4).unwrap();
        assert!((sym - single).abs() < 1e-14);
    }

    #[test]
    fn marginal_dt_mass_conservation() {
        let p = params(1.0, 1.0, 1);
        let data = vec![vec![-1.0], vec![0.5], vec![2.0]];
        let n = 8001;
        let (lo, hi) = (-10.0, 10.0);
        let h = (hi - lo) / (n - 1) as f64;
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                let x = lo + i as f64 * h;
                marginal_homotopy_dt_oracle(&p, &data, &[x], 0.5).unwrap()
            })
            .collect();
        let integral = oracle::trapezoid(&vals, h);
        assert!(integral.abs() < 1e-6, "mass leak {integral}");
    }

    #[test]
    fn marginal_dt_oracle_bounds() {
        let p = params(1.0, 1.0, 1);
        let data = vec![vec![0.0]];
        assert!(marginal_homotopy_dt_oracle(&p, &data, &[0.0], 0.0).is_err());
        assert!(marginal_homotopy_dt_oracle(&p, &data, &[0.0], 1.0).is_err());
        assert!(marginal_homotopy_dt_oracle(&p, &[], &[0.0], 0.5).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(HomotopyParams::new(0.0, 1.0, 1e-4, 1).is_err());
        assert!(HomotopyParams::new(1.0, -1.0, 1e-4, 1).is_err());
        assert!(HomotopyParams::new(1.0, 1.0, 0.0, 1).is_err());
        assert!(HomotopyParams::new(1.0, 1.0, 1.0, 1).is_err());
        assert!(HomotopyParams::new(1.0, 1.0, 1e-4, 0).is_err());
    }

    proptest! {
        #[test]
        fn var_monotone_non_increasing(
            omega in 0.1f64..3.0,
            sigma in 0.05f64..2.0,
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
        ) {
            let p = HomotopyParams::new(omega, sigma, 1e-4, 1).unwrap();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = cond_stats(&p, &[0.0], lo).unwrap().var;
            let b = cond_stats(&p, &[0.0], hi).unwrap().var;
            prop_assert!(b <= a + 1e-15);
        }

        #[test]
        fn innovation_nonnegative_and_lower_bound(
            omega in 0.2f64..2.0,
            sigma in 0.05f64..2.0,
            x0 in -3.0f64..3.0,
            x1 in -3.0f64..3.0,
            b0 in -3.0f64..3.0,
            b1 in -3.0f64..3.0,
            t in 0.0f64..1.0,
        ) {
            let p = HomotopyParams::new(omega, sigma, 1e-4, 2).unwrap();
            let g = innovation(&p, &[x0, x1], &[b0, b1]).unwrap();
            prop_assert!(g >= 0.0);
            let stats = cond_stats(&p, &[b0, b1], t).unwrap();
            let gbar = innovation_cond_mean(&p, &[b0, b1], t).unwrap();
            prop_assert!(gbar >= 2.0 * stats.var / (sigma * sigma) - 1e-12);
        }

        #[test]
        fn sample_time_in_range(u in 0.0f64..1.0, eps in 1e-6f64..0.5) {
            let p = HomotopyParams::new(1.0, 1.0, eps, 1).unwrap();
            let t = sample_time(&p, u).unwrap();
            prop_assert!((0.0..=1.0).contains(&t));
        }
    }
}
