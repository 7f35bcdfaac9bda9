//! The variational energy loss and its exact parameter gradient.
//!
//! Per batch the loss is the mean over data of three per-sample terms,
//! evaluated at one (t_i, x_i) draw per datum:
//!
//!   cov_i    = Phi(x_i) * (gamma(x_i, xbar_i) - gamma_bar(xbar_i, t_i))
//!   gradsq_i = |grad_x Phi(x_i)|^2
//!   l2_i     = Phi(x_i)^2
//!
//! with total = 1/2 * (cov + gradsq + lambda * l2). The covariance term is
//! centered per sample by the analytic conditional mean gamma_bar, which
//! keeps the estimator well defined at batch size 1 and across mixed draw
//! times.

use crate::error::{Result, VapoError};
use crate::homotopy::{self, HomotopyParams};
use crate::potential::PotentialModel;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Chunk width for the deterministic parallel reduction over a batch. The
/// combine order is fixed by chunk index, so results do not depend on the
/// worker count.
const BATCH_CHUNK: usize = 32;

/// Additive decomposition of one batch loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub cov_term: f64,
    pub gradsq_term: f64,
    pub l2_term: f64,
    pub total: f64,
    pub lambda: f64,
    pub batch_size: usize,
}

impl LossBreakdown {
    fn from_sums(cov: f64, gradsq: f64, l2: f64, lambda: f64, n: usize) -> Self {
        let nf = n as f64;
        let (cov, gradsq, l2) = (cov / nf, gradsq / nf, l2 / nf);
        LossBreakdown {
            cov_term: cov,
            gradsq_term: gradsq,
            l2_term: l2,
            total: 0.5 * (cov + gradsq + lambda * l2),
            lambda,
            batch_size: n,
        }
    }
}

/// One homotopy draw for a datum: time, perturbed sample.
#[derive(Debug, Clone)]
pub struct SampleDraw {
    pub xbar: Vec<f64>,
    pub t: f64,
    pub x: Vec<f64>,
}

/// Draw (t_i, x_i) for every datum in the batch. All randomness comes from
/// the caller-supplied stream, consumed in batch order.
pub fn draw_batch<R: Rng + ?Sized>(
    params: &HomotopyParams,
    batch: &[&[f64]],
    rng: &mut R,
) -> Result<Vec<SampleDraw>> {
    if batch.is_empty() {
        return Err(VapoError::EmptyInput("batch"));
    }
    let mut draws = Vec::with_capacity(batch.len());
    for &xbar in batch {
        let u: f64 = rng.gen();
        let t = homotopy::sample_time(params, u)?;
        let noise: Vec<f64> = (0..params.dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let x = homotopy::sample_cond(params, xbar, t, &noise)?;
        draws.push(SampleDraw {
            xbar: xbar.to_vec(),
            t,
            x,
        });
    }
    Ok(draws)
}

/// Evaluate the loss and its exact theta-gradient on fixed draws.
///
/// Split out from [`batch_loss`] so a frozen set of draws can be re-evaluated
/// after a parameter update (descent checks, finite differences).
pub fn loss_on_draws(
    model: &PotentialModel,
    params: &HomotopyParams,
    draws: &[SampleDraw],
    lambda: f64,
) -> Result<(LossBreakdown, Vec<f64>)> {
    if draws.is_empty() {
        return Err(VapoError::EmptyInput("draws"));
    }
    if !(lambda > 0.0) {
        return Err(VapoError::InvalidParam(format!("lambda = {lambda}")));
    }
    if model.input_dim() != params.dim {
        return Err(VapoError::DimMismatch {
            expected: params.dim,
            got: model.input_dim(),
        });
    }

    struct ChunkAcc {
        cov: f64,
        gradsq: f64,
        l2: f64,
        grad: Vec<f64>,
    }

    let per_chunk = |chunk: &[SampleDraw]| -> Result<ChunkAcc> {
        let mut acc = ChunkAcc {
            cov: 0.0,
            gradsq: 0.0,
            l2: 0.0,
            grad: vec![0.0; model.param_count()],
        };
        for draw in chunk {
            let rec = model.forward(&draw.x)?;
            let gamma = homotopy::innovation(params, &draw.x, &draw.xbar)?;
            let gamma_bar = homotopy::innovation_cond_mean(params, &draw.xbar, draw.t)?;
            let centered = gamma - gamma_bar;
            acc.cov += rec.value * centered;
            acc.gradsq += PotentialModel::gradnormsq(&rec);
            acc.l2 += rec.value * rec.value;
            // d total/d theta accumulates 1/2 * (centered + 2 lambda Phi) dPhi
            // plus 1/2 * d|grad Phi|^2.
            let dvalue = model.grad_theta_value(&rec);
            let dgrad = model.grad_theta_gradnormsq(&rec);
            let coeff = 0.5 * (centered + 2.0 * lambda * rec.value);
            for ((g, dv), dg) in acc.grad.iter_mut().zip(&dvalue).zip(&dgrad) {
                *g += coeff * dv + 0.5 * dg;
            }
        }
        Ok(acc)
    };

    let chunks: Vec<Result<ChunkAcc>> = draws
        .par_chunks(BATCH_CHUNK)
        .map(per_chunk)
        .collect();

    let n = draws.len() as f64;
    let mut cov = 0.0;
    let mut gradsq = 0.0;
    let mut l2 = 0.0;
    let mut grad = vec![0.0; model.param_count()];
    for chunk in chunks {
        let c = chunk?;
        cov += c.cov;
        gradsq += c.gradsq;
        l2 += c.l2;
        for (g, cg) in grad.iter_mut().zip(&c.grad) {
            *g += cg;
        }
    }
    for g in &mut grad {
        *g /= n;
    }
    Ok((
        LossBreakdown::from_sums(cov, gradsq, l2, lambda, draws.len()),
        grad,
    ))
}

/// Draw one (t, x) per datum and evaluate loss plus exact gradient.
pub fn batch_loss<R: Rng + ?Sized>(
    model: &PotentialModel,
    params: &HomotopyParams,
    batch: &[&[f64]],
    lambda: f64,
    rng: &mut R,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let draws = draw_batch(params, batch, rng)?;
    loss_on_draws(model, params, &draws, lambda)
}

/// Mean of phi_i * (gamma_i - gamma_bar_i) over the provided triples.
///
/// phi is deliberately not centered: the analytic gamma_bar already centers
/// the innovation conditionally, which is what makes this an estimator of the
/// covariance.
pub fn cov_estimator_centered(values: &[(f64, f64, f64)]) -> Result<f64> {
    if values.is_empty() {
        return Err(VapoError::EmptyInput("cov_estimator_centered values"));
    }
    let sum: f64 = values
        .iter()
        .map(|&(phi, gamma, gamma_bar)| phi * (gamma - gamma_bar))
        .sum();
    Ok(sum / values.len() as f64)
}
