//! Ridge regression at finite `p`, two independent routes to the log
//! partition function, and the distance between a TAP maximizer and the
//! ridge solution.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::rng::{combine_tags, substream, StreamRng};
use crate::tap::{gram_matrix, surrogate_constant};

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    /// `(xᵀx + Δ·I)⁻¹xᵀy`.
    pub a_delta: DVector<f64>,
    pub norm_sq_over_p: f64,
    pub residual_over_p: f64,
}

/// Solves `(G + Δ·I)·a = xᵀy` by Cholesky.
pub fn ridge_from_gram(gram: &DMatrix<f64>, xty: &DVector<f64>, delta: f64) -> Result<DVector<f64>> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::InvalidParameter(format!("ridge needs delta > 0, got {delta}")));
    }
    if gram.iter().chain(xty.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Factorization("non-finite entries in ridge system".into()));
    }
    let p = gram.nrows();
    let shifted = gram + DMatrix::identity(p, p) * delta;
    let chol = Cholesky::new(shifted)
        .ok_or_else(|| Error::Factorization("xᵀx + Δ·I is not positive definite".into()))?;
    Ok(chol.solve(xty))
}

pub fn ridge_solve(inst: &ProblemInstance) -> Result<RidgeSolution> {
    let gram = gram_matrix(inst.x());
    let xty = inst.x().tr_mul(inst.y());
    let a_delta = ridge_from_gram(&gram, &xty, inst.params().delta)?;
    Ok(summarize_ridge(inst, a_delta))
}

pub(crate) fn summarize_ridge(inst: &ProblemInstance, a_delta: DVector<f64>) -> RidgeSolution {
    let p = inst.p() as f64;
    let residual = (inst.y() - inst.x() * &a_delta).norm_squared();
    RidgeSolution {
        norm_sq_over_p: a_delta.norm_squared() / p,
        residual_over_p: residual / p,
        a_delta,
    }
}

/// `−‖y − x·a‖²/(2Δp) − ‖a‖²/(2p)`, strictly concave and maximized at `a_Δ`.
pub fn regularized_objective(a: &DVector<f64>, inst: &ProblemInstance) -> f64 {
    let p = inst.p() as f64;
    let delta = inst.params().delta;
    -(inst.y() - inst.x() * a).norm_squared() / (2.0 * delta * p) - a.norm_squared() / (2.0 * p)
}

/// Upper bound on `sup f_TAP`: the regularized objective at `a_Δ` plus `C`.
pub fn surrogate_upper_bound(inst: &ProblemInstance, a_delta: &DVector<f64>) -> f64 {
    let prm = inst.params();
    regularized_objective(a_delta, inst) + surrogate_constant(prm.alpha, prm.delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreeEnergyMethod {
    GaussianExact,
    GaussianMc,
    SphericalMc,
}

/// A per-coordinate free energy `(1/p)·ln Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeEnergyEstimate {
    pub value: f64,
    pub method: FreeEnergyMethod,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub samples: Option<usize>,
    /// Delta-method standard error of `value` (Monte Carlo only).
    pub std_error: Option<f64>,
}

/// Exact `(1/p)·ln ∫ exp(−‖y − xβ‖²/(2Δ)) dN(0, I)(β)`.
pub fn gaussian_log_partition(inst: &ProblemInstance) -> Result<FreeEnergyEstimate> {
    let p = inst.p();
    let delta = inst.params().delta;
    let xty = inst.x().tr_mul(inst.y());
    let precision = DMatrix::identity(p, p) + gram_matrix(inst.x()) / delta;
    let chol = Cholesky::new(precision)
        .ok_or_else(|| Error::Factorization("I + xᵀx/Δ is not positive definite".into()))?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let a_delta = chol.solve(&xty) / delta;
    let ln_z = -0.5 * log_det + xty.dot(&a_delta) / (2.0 * delta)
        - inst.y().norm_squared() / (2.0 * delta);
    if !ln_z.is_finite() {
        return Err(Error::Factorization("non-finite log determinant".into()));
    }
    Ok(FreeEnergyEstimate {
        value: ln_z / p as f64,
        method: FreeEnergyMethod::GaussianExact,
        ci_low: None,
        ci_high: None,
        samples: None,
        std_error: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McOptions {
    pub samples: usize,
    /// Bootstrap resamples for the confidence interval; zero skips the bootstrap.
    pub bootstrap_resamples: usize,
    /// Two-sided coverage of the bootstrap interval.
    pub confidence: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            samples: 200_000,
            bootstrap_resamples: 1000,
            confidence: 0.95,
        }
    }
}

pub const MIN_MC_SAMPLES: usize = 1000;
const BLOCK: usize = 4096;

#[derive(Clone, Copy)]
enum Prior {
    Gaussian,
    Sphere,
}

/// Log-weights `−‖y − xβᵢ‖²/(2Δ)` for `samples` prior draws, block by block.
fn log_weights(inst: &ProblemInstance, prior: Prior, samples: usize, stream_tag: u64) -> Vec<f64> {
    let (p, seed) = (inst.p(), inst.params().master_seed);
    let delta = inst.params().delta;
    let label = match prior {
        Prior::Gaussian => "mc-gaussian",
        Prior::Sphere => "mc-sphere",
    };
    let blocks = samples.div_ceil(BLOCK);
    let per_block: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let len = BLOCK.min(samples - b * BLOCK);
            let mut rng = substream(seed, combine_tags(stream_tag, b as u64), label);
            let mut betas = DMatrix::from_fn(p, len, |_, _| {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            });
            if let Prior::Sphere = prior {
                let radius = (p as f64).sqrt();
                for mut col in betas.column_iter_mut() {
                    let n = col.norm();
                    // a zero draw has probability zero; map it to a fixed pole
                    if n == 0.0 {
                        col[0] = radius;
                    } else {
                        col *= radius / n;
                    }
                }
            }
            let fitted = inst.x() * &betas;
            fitted
                .column_iter()
                .map(|c| -(inst.y() - c).norm_squared() / (2.0 * delta))
                .collect()
        })
        .collect();
    per_block.into_iter().flatten().collect()
}

fn shifted_weights(log_w: &[f64]) -> Result<(f64, Vec<f64>)> {
    let shift = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::WeightUnderflow);
    }
    Ok((shift, log_w.iter().map(|l| (l - shift).exp()).collect()))
}

fn resample_log_mean(weights: &[f64], rng: &mut StreamRng) -> f64 {
    let n = weights.len();
    let sum: f64 = (0..n).map(|_| weights[rng.random_range(0..n)]).sum();
    (sum / n as f64).ln()
}

fn percentile(sorted: &[f64], prob: f64) -> f64 {
    let pos = prob * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn mc_estimate(
    inst: &ProblemInstance,
    prior: Prior,
    opts: &McOptions,
    stream_tag: u64,
) -> Result<FreeEnergyEstimate> {
    if opts.samples < MIN_MC_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "at least {MIN_MC_SAMPLES} samples are required, got {}",
            opts.samples
        )));
    }
    if !(opts.confidence > 0.0 && opts.confidence < 1.0) {
        return Err(Error::InvalidParameter("confidence must lie in (0, 1)".into()));
    }
    let p = inst.p() as f64;
    let n = opts.samples as f64;
    let log_w = log_weights(inst, prior, opts.samples, stream_tag);
    let (shift, w) = shifted_weights(&log_w)?;
    let mean = w.iter().sum::<f64>() / n;
    if mean.is_nan() || mean <= 0.0 {
        return Err(Error::WeightUnderflow);
    }
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let log_mean = shift + mean.ln();
    let value = log_mean / p;
    let std_error = (var / n).sqrt() / mean / p;

    let (ci_low, ci_high) = if opts.bootstrap_resamples > 0 {
        let seed = inst.params().master_seed;
        let mut boots: Vec<f64> = (0..opts.bootstrap_resamples)
            .into_par_iter()
            .map(|r| {
                let mut rng = substream(seed, combine_tags(stream_tag, r as u64), "mc-bootstrap");
                (shift + resample_log_mean(&w, &mut rng)) / p
            })
            .collect();
        boots.sort_by(f64::total_cmp);
        let tail = 0.5 * (1.0 - opts.confidence);
        // the percentile interval need not contain the point estimate; widen to it
        let lo = percentile(&boots, tail).min(value);
        let hi = percentile(&boots, 1.0 - tail).max(value);
        (Some(lo), Some(hi))
    } else {
        (None, None)
    };

    Ok(FreeEnergyEstimate {
        value,
        method: match prior {
            Prior::Gaussian => FreeEnergyMethod::GaussianMc,
            Prior::Sphere => FreeEnergyMethod::SphericalMc,
        },
        ci_low,
        ci_high,
        samples: Some(opts.samples),
        std_error: Some(std_error),
    })
}

/// Plain Monte Carlo over the uniform prior on the sphere of radius `√p`.
pub fn mc_spherical_free_energy(
    inst: &ProblemInstance,
    opts: &McOptions,
    stream_tag: u64,
) -> Result<FreeEnergyEstimate> {
    mc_estimate(inst, Prior::Sphere, opts, stream_tag)
}

/// Plain Monte Carlo over the standard Gaussian prior; the sampling
/// counterpart of [`gaussian_log_partition`].
pub fn mc_gaussian_free_energy(
    inst: &ProblemInstance,
    opts: &McOptions,
    stream_tag: u64,
) -> Result<FreeEnergyEstimate> {
    mc_estimate(inst, Prior::Gaussian, opts, stream_tag)
}

/// `(1/p)·‖a_hat − a_delta‖²`.
pub fn tap_ridge_distance(a_hat: &DVector<f64>, a_delta: &DVector<f64>) -> Result<f64> {
    if a_hat.len() != a_delta.len() {
        return Err(Error::DimensionMismatch {
            expected: a_delta.len(),
            found: a_hat.len(),
        });
    }
    if a_hat.is_empty() {
        return Err(Error::InvalidParameter("empty vectors".into()));
    }
    Ok((a_hat - a_delta).norm_squared() / a_hat.len() as f64)
}
