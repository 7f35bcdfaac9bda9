//! Sample-quality metrics, energy histograms, and the OOD score.
//!
//! Desk-scale substitutes for image-space metrics: multi-bandwidth unbiased
//! MMD^2, a smoothed 2-D histogram KL divergence, and mode-coverage counting,
//! plus the energy-based diagnostics (histogram, AUROC, nearest-neighbor
//! memorization audit).

use crate::error::{Result, VapoError};
use crate::ode::FlowField;
use rayon::prelude::*;

/// Headline metrics for a sample set against a reference dataset.
#[derive(Debug, Clone, Copy)]
pub struct MetricReport {
    /// Unbiased multi-bandwidth MMD^2; may be slightly negative.
    pub mmd_raw: f64,
    /// max(0, mmd_raw).
    pub mmd_rbf: f64,
    pub grid_kld: f64,
    pub mode_coverage: f64,
    pub n_samples: usize,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Sum over bandwidths h of exp(-|a-b|^2 / (2 h^2)).
#[inline]
fn kernel_sum(d2: f64, bandwidths: &[f64]) -> f64 {
    bandwidths
        .iter()
        .map(|h| (-0.5 * d2 / (h * h)).exp())
        .sum()
}

/// Unbiased MMD^2 estimator between two sample sets, summed over an RBF
/// bandwidth set. Symmetric in its arguments; can be slightly negative.
pub fn mmd_rbf(a: &[Vec<f64>], b: &[Vec<f64>], bandwidths: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(VapoError::InvalidParam(
            "mmd needs at least 2 points per set".into(),
        ));
    }
    if bandwidths.is_empty() {
        return Err(VapoError::EmptyInput("bandwidths"));
    }
    let m = a.len() as f64;
    let n = b.len() as f64;

    // Row sums collected per index, folded in order: deterministic regardless
    // of worker count.
    let aa: f64 = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..a.len() {
                if i != j {
                    s += kernel_sum(sq_dist(&a[i], &a[j]), bandwidths);
                }
            }
            s
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let bb: f64 = (0..b.len())
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..b.len() {
                if i != j {
                    s += kernel_sum(sq_dist(&b[i], &b[j]), bandwidths);
                }
            }
            s
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let ab: f64 = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for bj in b {
                s += kernel_sum(sq_dist(&a[i], bj), bandwidths);
            }
            s
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();

    Ok(aa / (m * (m - 1.0)) + bb / (n * (n - 1.0)) - 2.0 * ab / (m * n))
}

/// Permutation-null distribution of the MMD^2 statistic: pool both sets,
/// reshuffle labels `n_perms` times, recompute. Uses one precomputed Gram
/// matrix over the pool, so it is O(n_perms * pool^2) additions.
pub fn mmd_permutation_null(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    bandwidths: &[f64],
    n_perms: usize,
    rng: &mut impl rand::Rng,
) -> Result<Vec<f64>> {
    if a.len() < 2 || b.len() < 2 {
        return Err(VapoError::InvalidParam(
            "permutation null needs at least 2 points per set".into(),
        ));
    }
    let pool: Vec<&[f64]> = a.iter().chain(b.iter()).map(|p| p.as_slice()).collect();
    let n_total = pool.len();
    let gram: Vec<Vec<f64>> = (0..n_total)
        .into_par_iter()
        .map(|i| {
            (0..n_total)
                .map(|j| kernel_sum(sq_dist(pool[i], pool[j]), bandwidths))
                .collect()
        })
        .collect();
    let m = a.len();
    let mut idx: Vec<usize> = (0..n_total).collect();
    let mut null = Vec::with_capacity(n_perms);
    for _ in 0..n_perms {
        // Fisher-Yates over the pooled index set.
        for i in (1..n_total).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let (ia, ib) = idx.split_at(m);
        let mut aa = 0.0;
        for (p, &i) in ia.iter().enumerate() {
            for &j in &ia[p + 1..] {
                aa += gram[i][j];
            }
        }
        let mut bb = 0.0;
        for (p, &i) in ib.iter().enumerate() {
            for &j in &ib[p + 1..] {
                bb += gram[i][j];
            }
        }
        let mut ab = 0.0;
        for &i in ia {
            for &j in ib {
                ab += gram[i][j];
            }
        }
        let mf = m as f64;
        let nf = (n_total - m) as f64;
        null.push(2.0 * aa / (mf * (mf - 1.0)) + 2.0 * bb / (nf * (nf - 1.0)) - 2.0 * ab / (mf * nf));
    }
    Ok(null)
}

/// KL( data || samples ) between 2-D histograms with Laplace smoothing
/// alpha = 1. Points outside the range are clamped into the edge bins.
pub fn grid_kld(
    samples: &[Vec<f64>],
    data: &[Vec<f64>],
    bins: usize,
    range: ((f64, f64), (f64, f64)),
) -> Result<f64> {
    if samples.is_empty() || data.is_empty() {
        return Err(VapoError::EmptyInput("grid_kld inputs"));
    }
    if bins == 0 {
        return Err(VapoError::InvalidParam("bins = 0".into()));
    }
    for p in samples.iter().chain(data.iter()) {
        if p.len() != 2 {
            return Err(VapoError::DimMismatch {
                expected: 2,
                got: p.len(),
            });
        }
    }
    let hist = |pts: &[Vec<f64>]| -> Vec<f64> {
        let mut counts = vec![0.0f64; bins * bins];
        let ((x_lo, x_hi), (y_lo, y_hi)) = range;
        for p in pts {
            let bx = (((p[0] - x_lo) / (x_hi - x_lo) * bins as f64).floor() as i64)
                .clamp(0, bins as i64 - 1) as usize;
            let by = (((p[1] - y_lo) / (y_hi - y_lo) * bins as f64).floor() as i64)
                .clamp(0, bins as i64 - 1) as usize;
            counts[bx * bins + by] += 1.0;
        }
        let total = pts.len() as f64 + (bins * bins) as f64;
        counts.iter().map(|c| (c + 1.0) / total).collect()
    };
    let p = hist(data);
    let q = hist(samples);
    Ok(p.iter()
        .zip(&q)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum())
}

/// Fraction of mode centers that capture at least 1% of the samples within
/// `capture_radius`.
pub fn mode_coverage(
    samples: &[Vec<f64>],
    mode_centers: &[Vec<f64>],
    capture_radius: f64,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(VapoError::EmptyInput("samples"));
    }
    if mode_centers.is_empty() {
        return Err(VapoError::EmptyInput("mode_centers"));
    }
    let r2 = capture_radius * capture_radius;
    let min_count = (samples.len() as f64 * 0.01).ceil() as usize;
    let covered = mode_centers
        .iter()
        .filter(|c| {
            samples
                .iter()
                .filter(|s| sq_dist(s, c) <= r2)
                .count()
                >= min_count.max(1)
        })
        .count();
    Ok(covered as f64 / mode_centers.len() as f64)
}

/// A plain histogram: `edges` has `counts.len() + 1` entries.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Build over [lo, hi] split into `bins` equal cells; values are clamped
    /// into the outermost cells.
    pub fn build(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let mut counts = vec![0u64; bins];
        let width = hi - lo;
        for &v in values {
            let b = (((v - lo) / width * bins as f64).floor() as i64).clamp(0, bins as i64 - 1)
                as usize;
            counts[b] += 1;
        }
        let edges = (0..=bins)
            .map(|i| lo + width * i as f64 / bins as f64)
            .collect();
        Histogram { edges, counts }
    }

    /// Intersection-over-union of two normalized histograms on shared edges.
    pub fn overlap(&self, other: &Histogram) -> Result<f64> {
        if self.counts.len() != other.counts.len() {
            return Err(VapoError::DimMismatch {
                expected: self.counts.len(),
                got: other.counts.len(),
            });
        }
        let na: f64 = self.counts.iter().sum::<u64>() as f64;
        let nb: f64 = other.counts.iter().sum::<u64>() as f64;
        if na == 0.0 || nb == 0.0 {
            return Err(VapoError::EmptyInput("histogram"));
        }
        let mut inter = 0.0;
        let mut union = 0.0;
        for (&a, &b) in self.counts.iter().zip(&other.counts) {
            let pa = a as f64 / na;
            let pb = b as f64 / nb;
            inter += pa.min(pb);
            union += pa.max(pb);
        }
        Ok(inter / union)
    }
}

/// Evaluate the potential on each sample.
pub fn energies(field: &dyn FlowField, samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    samples.iter().map(|s| field.value(s)).collect()
}

/// Histogram of energy values; the range spans min..max with 1% padding on
/// each side (a degenerate span falls back to a unit-width window).
pub fn energy_histogram(field: &dyn FlowField, samples: &[Vec<f64>], bins: usize) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(VapoError::EmptyInput("samples"));
    }
    if bins == 0 {
        return Err(VapoError::InvalidParam("bins = 0".into()));
    }
    let vals = energies(field, samples)?;
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo {
        let pad = 0.01 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    };
    Ok(Histogram::build(&vals, lo, hi, bins))
}

/// Energy histograms of two sample sets over shared edges spanning both.
pub fn energy_histogram_pair(
    field: &dyn FlowField,
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    bins: usize,
) -> Result<(Histogram, Histogram)> {
    if a.is_empty() || b.is_empty() {
        return Err(VapoError::EmptyInput("samples"));
    }
    let va = energies(field, a)?;
    let vb = energies(field, b)?;
    let lo = va.iter().chain(&vb).cloned().fold(f64::INFINITY, f64::min);
    let hi = va
        .iter()
        .chain(&vb)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo {
        let pad = 0.01 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    };
    Ok((
        Histogram::build(&va, lo, hi, bins),
        Histogram::build(&vb, lo, hi, bins),
    ))
}

/// AUROC of the raw scores with `pos` treated as the positive class, computed
/// from the rank statistic with average ranks for ties.
pub fn auroc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(VapoError::EmptyInput("auroc class"));
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    if all.iter().any(|(s, _)| s.is_nan()) {
        return Err(VapoError::NonFinite("auroc scores".into()));
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let n = all.len();
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let np = pos.len() as f64;
    let nn = neg.len() as f64;
    let u = rank_sum_pos - np * (np + 1.0) / 2.0;
    Ok(u / (np * nn))
}

/// Energy-based OOD score: AUROC of Phi(x) with in-distribution positive.
pub fn ood_auroc(
    field: &dyn FlowField,
    in_samples: &[Vec<f64>],
    out_samples: &[Vec<f64>],
) -> Result<f64> {
    let pos = energies(field, in_samples)?;
    let neg = energies(field, out_samples)?;
    auroc(&pos, &neg)
}

/// Exact k nearest neighbors of each query among the dataset rows, sorted by
/// ascending Euclidean distance. Returns (index, distance) pairs per query.
pub fn nearest_neighbors(
    queries: &[Vec<f64>],
    dataset: &[Vec<f64>],
    k: usize,
) -> Result<Vec<Vec<(usize, f64)>>> {
    if dataset.is_empty() {
        return Err(VapoError::EmptyInput("dataset"));
    }
    if k == 0 || k > dataset.len() {
        return Err(VapoError::InvalidParam(format!(
            "k = {k} outside 1..={}",
            dataset.len()
        )));
    }
    queries
        .par_iter()
        .map(|q| {
            if q.len() != dataset[0].len() {
                return Err(VapoError::DimMismatch {
                    expected: dataset[0].len(),
                    got: q.len(),
                });
            }
            let mut dists: Vec<(usize, f64)> = dataset
                .iter()
                .enumerate()
                .map(|(i, p)| (i, sq_dist(q, p).sqrt()))
                .collect();
            dists.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            dists.truncate(k);
            Ok(dists)
        })
        .collect()
}

/// Fraction of queries whose nearest dataset point lies within `radius`
/// (the memorization audit).
pub fn memorization_fraction(
    queries: &[Vec<f64>],
    dataset: &[Vec<f64>],
    radius: f64,
) -> Result<f64> {
    let nn = nearest_neighbors(queries, dataset, 1)?;
    let hits = nn.iter().filter(|v| v[0].1 < radius).count();
    Ok(hits as f64 / queries.len().max(1) as f64)
}
