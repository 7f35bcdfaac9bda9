//! Self-contained verification suites over the numerical oracles.
//!
//! Each suite cross-checks a closed-form implementation path against an
//! independent route: Bayes quadrature for the homotopy statistics, central
//! finite differences for every gradient path, and closed-form flow maps for
//! the integrators. The CLI `verify` command runs these outside the test
//! harness; the acceptance tests assert on the same results.

use crate::error::Result;
use crate::homotopy::{self, HomotopyParams};
use crate::loss;
use crate::ode::{self, FlowField, OdeConfig, OdeMethod};
use crate::oracle;
use crate::potential::{Activation, PotentialModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<CheckResult>,
    pub elapsed_s: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Homotopy,
    Gradients,
    Ode,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "homotopy" => Ok(Suite::Homotopy),
            "gradients" => Ok(Suite::Gradients),
            "ode" => Ok(Suite::Ode),
            "all" => Ok(Suite::All),
            other => Err(crate::VapoError::InvalidParam(format!("suite '{other}'"))),
        }
    }
}

pub fn run(suite: Suite) -> Vec<SuiteReport> {
    match suite {
        Suite::Homotopy => vec![run_homotopy_suite()],
        Suite::Gradients => vec![run_gradient_suite()],
        Suite::Ode => vec![run_ode_suite()],
        Suite::All => vec![run_homotopy_suite(), run_gradient_suite(), run_ode_suite()],
    }
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Closed-form test field Phi(x) = -1/2 |x|^2 with flow map x(t) = x0 e^{-t}.
pub struct QuadraticWell(pub usize);

impl FlowField for QuadraticWell {
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.iter().map(|v| -v).collect())
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(-0.5 * x.iter().map(|v| v * v).sum::<f64>())
    }
    fn dim(&self) -> usize {
        self.0
    }
}

// -------------------------------------------------------------------------
// Homotopy suite: quadrature, PDE consistency, time law.
// -------------------------------------------------------------------------

pub fn run_homotopy_suite() -> SuiteReport {
    let started = Instant::now();
    let mut checks = Vec::new();

    // Closed-form conditional statistics and log density against brute-force
    // Bayes quadrature, over several hyperparameter settings and times.
    let configs = [
        (1.0, 1.0, 2.0),
        (1.0, 0.01, 1.0),
        (1.5, 0.5, -0.7),
    ];
    let times = [0.0, 0.25, 0.5, 1.0];
    let mut max_moment_err = 0.0f64;
    let mut max_logden_err = 0.0f64;
    for &(omega, sigma, xbar) in &configs {
        let p = HomotopyParams::new(omega, sigma, 1e-4, 1).unwrap();
        for &t in &times {
            let q = oracle::bayes_quadrature_1d(&p, xbar, t);
            let s = homotopy::cond_stats(&p, &[xbar], t).unwrap();
            max_moment_err = max_moment_err
                .max((s.mean[0] - q.mean).abs())
                .max((s.var - q.var).abs());
            // Probe the log density at the mode and out in the tails.
            let sd = s.var.sqrt();
            for &off in &[0.0, 0.5, -1.0, 2.0, -3.5] {
                let x = s.mean[0] + off * sd;
                let ours = homotopy::cond_log_density(&p, &[x], &[xbar], t).unwrap();
                let theirs = oracle::log_homotopy_numerator(&p, x, xbar, t) - q.log_z;
                max_logden_err = max_logden_err.max((ours - theirs).abs());
            }
        }
    }
    checks.push(check(
        "quadrature-moments",
        max_moment_err < 1e-6,
        format!("max |mean/var - quadrature| = {max_moment_err:.3e} (tol 1e-6)"),
    ));
    checks.push(check(
        "quadrature-log-density",
        max_logden_err < 1e-6,
        format!("max |log density - quadrature| = {max_logden_err:.3e} (tol 1e-6)"),
    ));

    // Evolution PDE: the innovation-based right-hand side against a central
    // finite difference of the closed-form marginal, on a 16-point dataset.
    let p = HomotopyParams::new(1.0, 0.5, 1e-4, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(160);
    let dataset: Vec<Vec<f64>> = (0..16).map(|_| vec![rng.gen_range(-2.0..2.0)]).collect();
    let grid_n = 2001;
    let (lo, hi) = (-8.0, 8.0);
    let h_grid = (hi - lo) / (grid_n - 1) as f64;
    let h_t = 1e-4;
    let mut worst_rel = 0.0f64;
    for &t in &[0.1, 0.5, 0.9] {
        let mut max_abs_gap = 0.0f64;
        let mut max_abs_rhs = 0.0f64;
        for i in 0..grid_n {
            let x = [lo + i as f64 * h_grid];
            let rhs = homotopy::marginal_homotopy_dt_oracle(&p, &dataset, &x, t).unwrap();
            let up = homotopy::marginal_density(&p, &dataset, &x, t + h_t).unwrap();
            let dn = homotopy::marginal_density(&p, &dataset, &x, t - h_t).unwrap();
            let fd = (up - dn) / (2.0 * h_t);
            max_abs_gap = max_abs_gap.max((rhs - fd).abs());
            max_abs_rhs = max_abs_rhs.max(rhs.abs());
        }
        worst_rel = worst_rel.max(max_abs_gap / max_abs_rhs);
    }
    checks.push(check(
        "pde-fd-agreement",
        worst_rel < 1e-5,
        format!("max relative gap vs d/dt finite difference = {worst_rel:.3e} (tol 1e-5)"),
    ));

    let mass_n = 8001;
    let mass_h = (10.0 - (-10.0)) / (mass_n - 1) as f64;
    let mut worst_mass = 0.0f64;
    for &t in &[0.1, 0.5, 0.9] {
        let vals: Vec<f64> = (0..mass_n)
            .map(|i| {
                let x = [-10.0 + i as f64 * mass_h];
                homotopy::marginal_homotopy_dt_oracle(&p, &dataset, &x, t).unwrap()
            })
            .collect();
        worst_mass = worst_mass.max(oracle::trapezoid(&vals, mass_h).abs());
    }
    checks.push(check(
        "pde-mass-conservation",
        worst_mass < 1e-6,
        format!("max |integral of dt-RHS| = {worst_mass:.3e} (tol 1e-6)"),
    ));

    // Reciprocal time law: KS statistic of 1e5 mapped uniform draws against
    // the reciprocal CDF, below the 1% critical value.
    let p_time = HomotopyParams::new(1.0, 0.01, 1e-4, 1).unwrap();
    let n_draws = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(161);
    let mut shifted: Vec<f64> = (0..n_draws)
        .map(|_| homotopy::sample_time(&p_time, rng.gen()).unwrap() + p_time.eps_sharp)
        .collect();
    let ks = oracle::ks_statistic(&mut shifted, |s| oracle::reciprocal_cdf(p_time.eps_sharp, s));
    let crit = oracle::ks_critical_value(n_draws, 0.01).unwrap();
    checks.push(check(
        "time-law-ks",
        ks < crit,
        format!("KS statistic {ks:.5} vs 1% critical value {crit:.5} over {n_draws} draws"),
    ));

    SuiteReport {
        suite: "homotopy".into(),
        checks,
        elapsed_s: started.elapsed().as_secs_f64(),
    }
}

// -------------------------------------------------------------------------
// Gradient suite: finite differences over 100 random configurations.
// -------------------------------------------------------------------------

pub fn run_gradient_suite() -> SuiteReport {
    let started = Instant::now();
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(300);

    let mut worst_input = 0.0f64;
    let mut worst_theta = 0.0f64;
    let mut worst_double = 0.0f64;
    for cfg_idx in 0..100 {
        let dim = rng.gen_range(1..=8);
        let n_hidden = rng.gen_range(1..=3);
        let mut sizes = vec![dim];
        for _ in 0..n_hidden {
            sizes.push(rng.gen_range(4..=24));
        }
        sizes.push(1);
        let activation = if cfg_idx % 2 == 0 {
            Activation::Gelu
        } else {
            Activation::Tanh
        };
        let model = PotentialModel::init(sizes, activation, &mut rng).unwrap();
        let x: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let rec = model.forward(&x).unwrap();

        let fd_x = oracle::fd_gradient(|p| model.forward(p).unwrap().value, &x, 1e-4);
        let guard = 1e-3 * linf(&fd_x).max(1e-6);
        worst_input = worst_input.max(oracle::max_rel_err(&rec.input_grad, &fd_x, guard));

        let mut probe = model.clone();
        let fd_theta = oracle::fd_gradient(
            |theta| {
                probe.theta.copy_from_slice(theta);
                probe.forward(&x).unwrap().value
            },
            &model.theta,
            1e-5,
        );
        let guard = 1e-3 * linf(&fd_theta).max(1e-6);
        worst_theta =
            worst_theta.max(oracle::max_rel_err(&model.grad_theta_value(&rec), &fd_theta, guard));

        let mut probe = model.clone();
        let fd_double = oracle::fd_gradient(
            |theta| {
                probe.theta.copy_from_slice(theta);
                let r = probe.forward(&x).unwrap();
                PotentialModel::gradnormsq(&r)
            },
            &model.theta,
            1e-5,
        );
        let guard = 1e-3 * linf(&fd_double).max(1e-6);
        worst_double = worst_double.max(oracle::max_rel_err(
            &model.grad_theta_gradnormsq(&rec),
            &fd_double,
            guard,
        ));
    }
    checks.push(check(
        "input-grad-fd",
        worst_input < 1e-4,
        format!("max relative error over 100 configs = {worst_input:.3e} (tol 1e-4)"),
    ));
    checks.push(check(
        "param-grad-fd",
        worst_theta < 1e-4,
        format!("max relative error over 100 configs = {worst_theta:.3e} (tol 1e-4)"),
    ));
    checks.push(check(
        "double-backprop-fd",
        worst_double < 1e-4,
        format!("max relative error over 100 configs = {worst_double:.3e} (tol 1e-4)"),
    ));

    // Full batch-loss gradient on frozen draws.
    let mut worst_loss = 0.0f64;
    for cfg_idx in 0..20 {
        let dim = rng.gen_range(1..=4);
        let width = rng.gen_range(4..=16);
        let activation = if cfg_idx % 2 == 0 {
            Activation::Gelu
        } else {
            Activation::Tanh
        };
        let model = PotentialModel::init(vec![dim, width, 1], activation, &mut rng).unwrap();
        let params = HomotopyParams::new(1.0, 0.4, 1e-4, dim).unwrap();
        let batch: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let refs: Vec<&[f64]> = batch.iter().map(|b| b.as_slice()).collect();
        let draws = loss::draw_batch(&params, &refs, &mut rng).unwrap();
        let (_, grad) = loss::loss_on_draws(&model, &params, &draws, 1e-3).unwrap();
        let mut probe = model.clone();
        let fd = oracle::fd_gradient(
            |theta| {
                probe.theta.copy_from_slice(theta);
                loss::loss_on_draws(&probe, &params, &draws, 1e-3).unwrap().0.total
            },
            &model.theta,
            1e-5,
        );
        let guard = 1e-3 * linf(&fd).max(1e-6);
        worst_loss = worst_loss.max(oracle::max_rel_err(&grad, &fd, guard));
    }
    checks.push(check(
        "batch-loss-grad-fd",
        worst_loss < 1e-4,
        format!("max relative error over 20 configs = {worst_loss:.3e} (tol 1e-4)"),
    ));

    SuiteReport {
        suite: "gradients".into(),
        checks,
        elapsed_s: started.elapsed().as_secs_f64(),
    }
}

// -------------------------------------------------------------------------
// ODE suite: closed-form flows, convergence order, energy monotonicity.
// -------------------------------------------------------------------------

pub fn run_ode_suite() -> SuiteReport {
    let started = Instant::now();
    let mut checks = Vec::new();
    let cfg = OdeConfig::default();

    // Quadratic-well flow map at t_end, against x0 e^{-t_end}.
    let field = QuadraticWell(2);
    let decay = (-cfg.t_end).exp();
    let mut worst_rel = 0.0f64;
    for x0 in [[1.5, -2.0], [0.2, 0.1], [-3.0, 2.5]] {
        let (xf, _) = ode::integrate(&field, &x0, &cfg).unwrap();
        let err = xf
            .iter()
            .zip(&x0)
            .map(|(a, b)| (a - b * decay).abs())
            .fold(0.0, f64::max);
        let scale = x0.iter().map(|v| (v * decay).abs()).fold(0.0, f64::max);
        worst_rel = worst_rel.max(err / scale);
    }
    checks.push(check(
        "ode-quadratic-closed-form",
        worst_rel <= 10.0 * cfg.rtol,
        format!(
            "max relative endpoint error {worst_rel:.3e} (tol 10*rtol = {:.1e})",
            10.0 * cfg.rtol
        ),
    ));

    // Fourth-order convergence of fixed-step RK4 under step halving.
    let base = OdeConfig {
        method: OdeMethod::Rk4Fixed,
        fixed_step: 0.025,
        ..cfg
    };
    let halved = OdeConfig {
        fixed_step: 0.0125,
        ..base
    };
    let x0 = [1.0, -0.5];
    let err_of = |c: &OdeConfig| {
        let (xf, _) = ode::integrate(&field, &x0, c).unwrap();
        xf.iter()
            .zip(&x0)
            .map(|(a, b)| (a - b * decay).abs())
            .fold(0.0, f64::max)
    };
    let ratio = err_of(&base) / err_of(&halved);
    checks.push(check(
        "rk4-order-ratio",
        (12.0..=20.0).contains(&ratio),
        format!("error ratio under step halving = {ratio:.2} (expected in [12, 20])"),
    ));

    // Energy must not decrease along accepted steps (slack 10*atol), both on
    // the closed-form well and on a random smooth network field.
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let model = PotentialModel::init(vec![2, 24, 24, 1], Activation::Gelu, &mut rng).unwrap();
    let fields: Vec<&dyn FlowField> = vec![&field, &model];
    let mut worst_drop = 0.0f64;
    for f in fields {
        for _ in 0..4 {
            let x0: Vec<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let mut last: Option<f64> = None;
            ode::integrate_observed(f, &x0, &cfg, |_, x| {
                let e = f.value(x).unwrap();
                if let Some(prev) = last {
                    worst_drop = worst_drop.max(prev - e);
                }
                last = Some(e);
            })
            .unwrap();
        }
    }
    checks.push(check(
        "energy-ascent",
        worst_drop <= 10.0 * cfg.atol,
        format!(
            "max energy drop along trajectories = {worst_drop:.3e} (slack 10*atol = {:.1e})",
            10.0 * cfg.atol
        ),
    ));

    SuiteReport {
        suite: "ode".into(),
        checks,
        elapsed_s: started.elapsed().as_secs_f64(),
    }
}

fn linf(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for report in run(Suite::All) {
            for c in &report.checks {
                assert!(c.passed, "[{}] {}: {}", report.suite, c.name, c.detail);
            }
        }
    }

    #[test]
    fn suite_parsing() {
        assert_eq!(Suite::parse("homotopy").unwrap(), Suite::Homotopy);
        assert_eq!(Suite::parse("all").unwrap(), Suite::All);
        assert!(Suite::parse("nope").is_err());
    }
}
