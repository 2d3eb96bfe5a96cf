//! The TAP functional for a spherical prior, its derivatives, and the
//! ridge-type surrogate that dominates it.
//!
//! With `q = ‖a‖²/p`,
//!
//! ```text
//! f_TAP(a) = −‖y − x·a‖²/(2Δp) − (α/2)·ln(1 + (1−q)/(Δα)) + ½·ln(1−q)
//!          = −‖y − x·a‖²/(2Δp) − h(q)
//! ```
//!
//! and `f_TAP = −∞` for `q ≥ 1`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::replica::e_delta_closed_form;
use crate::sphere::SecularSystem;

/// Shrinkage of the unit ball kept between iterates and the entropy singularity.
pub const DOMAIN_EPS: f64 = 1e-8;

/// `h(q) = (α/2)·ln(1 + (1−q)/(Δα)) − ½·ln(1−q)` with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HFamily {
    pub h: f64,
    pub h1: f64,
    pub h2: f64,
}

pub fn h_family(q: f64, alpha: f64, delta: f64) -> Result<HFamily> {
    if q.is_nan() || q < 0.0 {
        return Err(Error::InvalidParameter(format!("overlap must be in [0, 1), got {q}")));
    }
    if q >= 1.0 {
        return Err(Error::EntropySingularity { q });
    }
    let k = delta * alpha;
    let one_minus = 1.0 - q;
    let shifted = k + one_minus;
    Ok(HFamily {
        h: 0.5 * alpha * (one_minus / k).ln_1p() - 0.5 * one_minus.ln(),
        h1: -alpha / (2.0 * shifted) + 1.0 / (2.0 * one_minus),
        h2: -alpha / (2.0 * shifted * shifted) + 1.0 / (2.0 * one_minus * one_minus),
    })
}

/// Value of the TAP functional, with `−∞` carried as a tag rather than a float.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TapValue {
    Finite(f64),
    NegInfinity,
}

impl TapValue {
    pub fn to_f64(self) -> f64 {
        match self {
            TapValue::Finite(v) => v,
            TapValue::NegInfinity => f64::NEG_INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, TapValue::Finite(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TapEvaluation {
    pub value: TapValue,
    /// `‖a‖²/p`; may exceed 1, in which case `value` is `NegInfinity`.
    pub q: f64,
    /// `−‖y − x·a‖²/(2Δp)`.
    pub residual_term: f64,
    /// `−(α/2)·ln(1 + (1−q)/(Δα))`.
    pub onsager_term: f64,
    /// `½·ln(1−q)`, or `−∞` outside the domain.
    pub entropy_term: f64,
}

fn overlap(a: &DVector<f64>, p: usize) -> f64 {
    a.norm_squared() / p as f64
}

fn check_len(a: &DVector<f64>, p: usize) -> Result<()> {
    if a.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: a.len(),
        });
    }
    Ok(())
}

/// Evaluates the TAP functional directly from the design.
pub fn f_tap(a: &DVector<f64>, inst: &ProblemInstance) -> Result<TapEvaluation> {
    let p = inst.p();
    check_len(a, p)?;
    let prm = inst.params();
    let (alpha, delta) = (prm.alpha, prm.delta);
    let q = overlap(a, p);
    let residual_term = -(inst.y() - inst.x() * a).norm_squared() / (2.0 * delta * p as f64);
    if q >= 1.0 {
        return Ok(TapEvaluation {
            value: TapValue::NegInfinity,
            q,
            residual_term,
            onsager_term: -0.5 * alpha * ((1.0 - q) / (delta * alpha)).ln_1p(),
            entropy_term: f64::NEG_INFINITY,
        });
    }
    let onsager_term = -0.5 * alpha * ((1.0 - q) / (delta * alpha)).ln_1p();
    let entropy_term = 0.5 * (1.0 - q).ln();
    Ok(TapEvaluation {
        value: TapValue::Finite(residual_term + onsager_term + entropy_term),
        q,
        residual_term,
        onsager_term,
        entropy_term,
    })
}

fn guarded_h(q: f64, alpha: f64, delta: f64) -> Result<HFamily> {
    if q > 1.0 - DOMAIN_EPS {
        return Err(Error::EntropySingularity { q });
    }
    h_family(q, alpha, delta)
}

/// `∇f_TAP(a) = xᵀ(y − x·a)/(Δp) − 2·h'(q)·a/p`.
pub fn grad_f_tap(a: &DVector<f64>, inst: &ProblemInstance) -> Result<DVector<f64>> {
    let p = inst.p();
    check_len(a, p)?;
    let prm = inst.params();
    let hf = guarded_h(overlap(a, p), prm.alpha, prm.delta)?;
    let pf = p as f64;
    let resid = inst.y() - inst.x() * a;
    Ok(inst.x().tr_mul(&resid) / (prm.delta * pf) - a * (2.0 * hf.h1 / pf))
}

/// `vᵀ∇²f_TAP(a)·v` using
/// `−p·∇²f_TAP = (4/p)·h''(q)·aaᵀ + 2h'(q)·I + xᵀx/Δ`.
pub fn hessian_quadratic_form(
    a: &DVector<f64>,
    v: &DVector<f64>,
    inst: &ProblemInstance,
) -> Result<f64> {
    let p = inst.p();
    check_len(a, p)?;
    check_len(v, p)?;
    let prm = inst.params();
    let hf = guarded_h(overlap(a, p), prm.alpha, prm.delta)?;
    let pf = p as f64;
    let av = a.dot(v);
    let xv = (inst.x() * v).norm_squared();
    let neg_p_form = 4.0 / pf * hf.h2 * av * av + 2.0 * hf.h1 * v.norm_squared() + xv / prm.delta;
    Ok(-neg_p_form / pf)
}

/// The constant `C` that makes the surrogate touch `g_TAP` at `q = 1 − E_Δ`.
pub fn surrogate_constant(alpha: f64, delta: f64) -> f64 {
    let e = e_delta_closed_form(alpha, delta);
    0.5 * (1.0 - e) - 0.5 * alpha * (e / (delta * alpha)).ln_1p() + 0.5 * e.ln()
}

/// `g(q) − g_TAP(q) = h(q) − q/2 + C`; nonnegative on `[0, 1)` and zero at `1 − E_Δ`.
pub fn gap(q: f64, alpha: f64, delta: f64) -> Result<f64> {
    let hf = h_family(q, alpha, delta)?;
    Ok(hf.h - 0.5 * q + surrogate_constant(alpha, delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GPair {
    pub q: f64,
    pub g_tap: f64,
    pub g: f64,
}

/// `g_TAP(q)` and its surrogate `g(q)`, sharing one inner sphere-constrained
/// least-squares solve.
pub fn g_pair(q: f64, inst: &ProblemInstance) -> Result<GPair> {
    let system = SecularSystem::new(inst)?;
    g_pair_with(q, inst, &system)
}

/// [`g_pair`] against a precomputed spectral system, for grids.
pub fn g_pair_with(q: f64, inst: &ProblemInstance, system: &SecularSystem) -> Result<GPair> {
    let prm = inst.params();
    let hf = h_family(q, prm.alpha, prm.delta)?;
    let p = inst.p() as f64;
    let sol = system.solve((p * q).sqrt())?;
    let inner = -(inst.y() - inst.x() * &sol.a_mu).norm_squared() / (2.0 * prm.delta * p);
    Ok(GPair {
        q,
        g_tap: inner - hf.h,
        g: inner - 0.5 * q + surrogate_constant(prm.alpha, prm.delta),
    })
}

/// The TAP functional evaluated through the Gram matrix `xᵀx`, so that one
/// `p×p` product gives both the value and the gradient.
#[derive(Debug, Clone)]
pub struct TapObjective {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    p: usize,
    alpha: f64,
    delta: f64,
}

impl TapObjective {
    pub fn new(inst: &ProblemInstance) -> Self {
        Self::from_parts(gram_matrix(inst.x()), inst.x().tr_mul(inst.y()), inst)
    }

    pub fn from_parts(gram: DMatrix<f64>, xty: DVector<f64>, inst: &ProblemInstance) -> Self {
        let prm = inst.params();
        Self {
            gram,
            xty,
            yty: inst.y().norm_squared(),
            p: inst.p(),
            alpha: prm.alpha,
            delta: prm.delta,
        }
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn xty(&self) -> &DVector<f64> {
        &self.xty
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    fn residual_sq(&self, a: &DVector<f64>, ga: &DVector<f64>) -> f64 {
        (self.yty - 2.0 * a.dot(&self.xty) + a.dot(ga)).max(0.0)
    }

    /// `f_TAP(a)` (or `−∞` when `q ≥ 1`).
    pub fn value(&self, a: &DVector<f64>) -> f64 {
        let ga = &self.gram * a;
        self.value_from(a, &ga)
    }

    fn value_from(&self, a: &DVector<f64>, ga: &DVector<f64>) -> f64 {
        let pf = self.p as f64;
        let q = a.norm_squared() / pf;
        match h_family(q, self.alpha, self.delta) {
            Ok(hf) => -self.residual_sq(a, ga) / (2.0 * self.delta * pf) - hf.h,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Value and gradient; `None` outside the guarded domain `q ≤ 1 − ε`.
    pub fn value_and_grad(&self, a: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let pf = self.p as f64;
        let q = a.norm_squared() / pf;
        let hf = guarded_h(q, self.alpha, self.delta).ok()?;
        let ga = &self.gram * a;
        let value = -self.residual_sq(a, &ga) / (2.0 * self.delta * pf) - hf.h;
        let grad = (&self.xty - &ga) / (self.delta * pf) - a * (2.0 * hf.h1 / pf);
        Some((value, grad))
    }
}

/// `xᵀx`, symmetrized.
pub fn gram_matrix(x: &DMatrix<f64>) -> DMatrix<f64> {
    let xt = x.transpose();
    let g = &xt * x;
    (&g + g.transpose()) * 0.5
}
