//! Potential-flow ODE integration and latent interpolation.
//!
//! Generation integrates dx/dt = grad Phi(x) from Gaussian prior draws to a
//! terminal time (default 1.625). The adaptive method is Dormand-Prince 4(5)
//! with the standard scaled-norm error control; fixed-step RK4 and Euler are
//! kept for convergence-order checks and ablation.

use crate::error::{Result, VapoError};
use crate::homotopy::HomotopyParams;
use crate::potential::PotentialModel;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// A differentiable scalar field driving the flow. The model implements it;
/// tests hand-build fields with closed-form flow maps.
pub trait FlowField: Sync {
    /// Velocity at x, i.e. the gradient of the potential.
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Potential value at x (used for energy-monotonicity checks).
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn dim(&self) -> usize;
}

impl FlowField for PotentialModel {
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.input_grad)
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?.value)
    }

    fn dim(&self) -> usize {
        self.input_dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeMethod {
    Rk45Adaptive,
    Rk4Fixed,
    EulerFixed,
}

impl OdeMethod {
    pub fn name(self) -> &'static str {
        match self {
            OdeMethod::Rk45Adaptive => "rk45_adaptive",
            OdeMethod::Rk4Fixed => "rk4_fixed",
            OdeMethod::EulerFixed => "euler_fixed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rk45_adaptive" => Ok(OdeMethod::Rk45Adaptive),
            "rk4_fixed" => Ok(OdeMethod::Rk4Fixed),
            "euler_fixed" => Ok(OdeMethod::EulerFixed),
            other => Err(VapoError::InvalidParam(format!("ode method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeConfig {
    pub t_end: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub method: OdeMethod,
    /// Step size for the fixed-step methods.
    pub fixed_step: f64,
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig {
            t_end: 1.625,
            rtol: 1e-5,
            atol: 1e-6,
            max_steps: 10_000,
            method: OdeMethod::Rk45Adaptive,
            fixed_step: 1e-2,
        }
    }
}

impl OdeConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(VapoError::InvalidParam(format!("t_end = {}", self.t_end)));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(VapoError::InvalidParam("rtol and atol must be > 0".into()));
        }
        if self.max_steps == 0 {
            return Err(VapoError::InvalidParam("max_steps = 0".into()));
        }
        if !(self.fixed_step > 0.0 && self.fixed_step <= self.t_end) {
            return Err(VapoError::InvalidParam(format!(
                "fixed_step = {} must lie in (0, t_end]",
                self.fixed_step
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    /// Accepted steps.
    pub steps: usize,
    /// Rejected adaptive trial steps.
    pub rejected_steps: usize,
    /// Field (gradient) evaluations.
    pub f_evals: usize,
}

// Dormand-Prince 4(5) tableau. The field is autonomous, so the stage times
// are never consumed and only the A/B rows are kept.
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// 5th-order solution weights (row 7 of A equals B5: FSAL).
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
/// Embedded 4th-order weights.
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn check_finite(x: &[f64], t: f64) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(VapoError::NonFinite(format!("ode state at t = {t}")));
    }
    Ok(())
}

/// Integrate dx/dt = grad Phi(x) from x0 over [0, t_end], invoking `observe`
/// at every accepted step (including the initial state at t = 0).
pub fn integrate_observed(
    field: &dyn FlowField,
    x0: &[f64],
    cfg: &OdeConfig,
    mut observe: impl FnMut(f64, &[f64]),
) -> Result<(Vec<f64>, OdeStats)> {
    cfg.check()?;
    if x0.len() != field.dim() {
        return Err(VapoError::DimMismatch {
            expected: field.dim(),
            got: x0.len(),
        });
    }
    check_finite(x0, 0.0)?;
    match cfg.method {
        OdeMethod::Rk45Adaptive => rk45(field, x0, cfg, &mut observe),
        OdeMethod::Rk4Fixed | OdeMethod::EulerFixed => fixed(field, x0, cfg, &mut observe),
    }
}

/// Integrate without observation; returns the terminal state and solver stats.
pub fn integrate(field: &dyn FlowField, x0: &[f64], cfg: &OdeConfig) -> Result<(Vec<f64>, OdeStats)> {
    integrate_observed(field, x0, cfg, |_, _| {})
}

fn rk45(
    field: &dyn FlowField,
    x0: &[f64],
    cfg: &OdeConfig,
    observe: &mut dyn FnMut(f64, &[f64]),
) -> Result<(Vec<f64>, OdeStats)> {
    let dim = x0.len();
    let mut stats = OdeStats::default();
    let mut t = 0.0;
    let mut y = x0.to_vec();
    observe(t, &y);
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    k[0] = field.grad(&y)?;
    stats.f_evals += 1;
    check_finite(&k[0], t)?;
    let mut h = (0.01 * cfg.t_end).min(cfg.t_end);

    while t < cfg.t_end {
        if stats.steps + stats.rejected_steps >= cfg.max_steps {
            return Err(VapoError::StepLimit {
                max_steps: cfg.max_steps,
                t,
            });
        }
        h = h.min(cfg.t_end - t);

        for stage in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(stage) {
                let a = DP_A[stage - 1][j];
                if a != 0.0 {
                    for (yi, ki) in ys.iter_mut().zip(kj) {
                        *yi += h * a * ki;
                    }
                }
            }
            k[stage] = field.grad(&ys)?;
            stats.f_evals += 1;
            check_finite(&k[stage], t)?;
        }

        let mut y5 = y.clone();
        let mut y4 = y.clone();
        for (j, kj) in k.iter().enumerate() {
            for i in 0..dim {
                y5[i] += h * DP_B5[j] * kj[i];
                y4[i] += h * DP_B4[j] * kj[i];
            }
        }
        check_finite(&y5, t + h)?;

        // Scaled RMS error norm; accept when <= 1.
        let mut err_sq = 0.0;
        for i in 0..dim {
            let sc = cfg.atol + cfg.rtol * y[i].abs().max(y5[i].abs());
            let e = (y5[i] - y4[i]) / sc;
            err_sq += e * e;
        }
        let err = (err_sq / dim as f64).sqrt();

        if err <= 1.0 {
            t += h;
            // FSAL: last stage of the accepted step is the first of the next.
            k[0] = k[6].clone();
            y = y5;
            stats.steps += 1;
            observe(t, &y);
        } else {
            stats.rejected_steps += 1;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        if !(h > 0.0 && h.is_finite()) {
            return Err(VapoError::NonFinite(format!("step size at t = {t}")));
        }
    }
    Ok((y, stats))
}

fn fixed(
    field: &dyn FlowField,
    x0: &[f64],
    cfg: &OdeConfig,
    observe: &mut dyn FnMut(f64, &[f64]),
) -> Result<(Vec<f64>, OdeStats)> {
    let dim = x0.len();
    let mut stats = OdeStats::default();
    let mut t = 0.0;
    let mut y = x0.to_vec();
    observe(t, &y);
    while t < cfg.t_end {
        if stats.steps >= cfg.max_steps {
            return Err(VapoError::StepLimit {
                max_steps: cfg.max_steps,
                t,
            });
        }
        let h = cfg.fixed_step.min(cfg.t_end - t);
        match cfg.method {
            OdeMethod::EulerFixed => {
                let k1 = field.grad(&y)?;
                stats.f_evals += 1;
                for (yi, ki) in y.iter_mut().zip(&k1) {
                    *yi += h * ki;
                }
            }
            OdeMethod::Rk4Fixed => {
                let k1 = field.grad(&y)?;
                let mut y2 = y.clone();
                for i in 0..dim {
                    y2[i] += 0.5 * h * k1[i];
                }
                let k2 = field.grad(&y2)?;
                let mut y3 = y.clone();
                for i in 0..dim {
                    y3[i] += 0.5 * h * k2[i];
                }
                let k3 = field.grad(&y3)?;
                let mut y4 = y.clone();
                for i in 0..dim {
                    y4[i] += h * k3[i];
                }
                let k4 = field.grad(&y4)?;
                stats.f_evals += 4;
                for i in 0..dim {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            OdeMethod::Rk45Adaptive => unreachable!(),
        }
        t += h;
        check_finite(&y, t)?;
        stats.steps += 1;
        observe(t, &y);
    }
    Ok((y, stats))
}

/// Draw n prior points x0 ~ N(0, omega^2 I), consuming the stream in order.
pub fn draw_prior<R: Rng + ?Sized>(
    n: usize,
    params: &HomotopyParams,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..params.dim)
                .map(|_| params.omega * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

/// Generate n samples: prior draws integrated through the flow. Trajectories
/// are independent and run in parallel; outputs keep draw order.
pub fn sample<R: Rng + ?Sized>(
    field: &dyn FlowField,
    n: usize,
    params: &HomotopyParams,
    cfg: &OdeConfig,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    params.check()?;
    if params.dim != field.dim() {
        return Err(VapoError::DimMismatch {
            expected: field.dim(),
            got: params.dim,
        });
    }
    let starts = draw_prior(n, params, rng);
    starts
        .par_iter()
        .map(|x0| integrate(field, x0, cfg).map(|(x, _)| x))
        .collect()
}

/// Spherical interpolation between two latent points. Falls back to linear
/// interpolation when the subtended angle is below 1e-6.
pub fn slerp(a: &[f64], b: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(VapoError::DimMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(VapoError::OutOfRange {
            name: "alpha",
            value: alpha,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(VapoError::InvalidParam("slerp endpoint has zero norm".into()));
    }
    let cos_phi = (dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
    let phi = cos_phi.acos();
    if phi < 1e-6 {
        return Ok(a
            .iter()
            .zip(b)
            .map(|(x, y)| (1.0 - alpha) * x + alpha * y)
            .collect());
    }
    let s = phi.sin();
    let wa = ((1.0 - alpha) * phi).sin() / s;
    let wb = (alpha * phi).sin() / s;
    Ok(a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect())
}

/// Integrate the flow from k slerp points between two latent seeds; the
/// endpoints are the plain integrations of the seeds.
pub fn interpolate(
    field: &dyn FlowField,
    x0_a: &[f64],
    x0_b: &[f64],
    k: usize,
    cfg: &OdeConfig,
) -> Result<Vec<Vec<f64>>> {
    if k < 2 {
        return Err(VapoError::InvalidParam(format!(
            "interpolation needs k >= 2 points, got {k}"
        )));
    }
    let starts: Result<Vec<Vec<f64>>> = (0..k)
        .map(|j| slerp(x0_a, x0_b, j as f64 / (k - 1) as f64))
        .collect();
    let starts = starts?;
    starts
        .par_iter()
        .map(|x0| integrate(field, x0, cfg).map(|(x, _)| x))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
