//! Directional curvature of the TAP functional along the minimal eigenvector
//! of `xᵀx`.
//!
//! At `a = √(pq)·u_min` the Hessian gives
//! `(1/q)·(−aᵀ∇²f_TAP·a) = 4q·h''(q) + 2h'(q) + λ_min/Δ`. A negative value is a
//! direction of positive curvature, so `f_TAP` is not concave there.

use nalgebra::{DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::lambda_min_limit;
use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::tap::{gram_matrix, h_family};

#[derive(Debug, Clone, PartialEq)]
pub struct MinEigenpair {
    pub lambda_min: f64,
    pub u_min: DVector<f64>,
}

/// Smallest eigenpair of `xᵀx` from a full symmetric eigendecomposition.
pub fn min_eigpair(inst: &ProblemInstance) -> MinEigenpair {
    let eig = SymmetricEigen::new(gram_matrix(inst.x()));
    let (idx, &lambda_min) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("p >= 1");
    MinEigenpair {
        lambda_min,
        u_min: eig.eigenvectors.column(idx).normalize(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvatureReport {
    pub q: f64,
    pub lambda_min: f64,
    /// `(1/q)·(−aᵀ∇²f_TAP(a)·a)` at `a = √(pq)·u_min`.
    pub finite_p: f64,
    /// Same expression with `λ_min` replaced by its Marchenko–Pastur limit;
    /// `NaN` when `α ≤ 1`.
    pub asymptotic: f64,
    pub nonconcave: bool,
}

/// `−(k+1+q)α/(k+1−q)² + (1+q)/(1−q)² + (α+1−2√α)/k` with `k = Δα`.
pub fn asymptotic_curvature(q: f64, alpha: f64, delta: f64) -> f64 {
    let k = delta * alpha;
    -(k + 1.0 + q) * alpha / (k + 1.0 - q).powi(2)
        + (1.0 + q) / (1.0 - q).powi(2)
        + (alpha + 1.0 - 2.0 * alpha.sqrt()) / k
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("q must lie in (0, 1), got {q}")))
    }
}

pub fn directional_curvature(inst: &ProblemInstance, q: f64) -> Result<CurvatureReport> {
    check_q(q)?;
    let pair = min_eigpair(inst);
    curvature_with(inst, &pair, q)
}

fn curvature_with(inst: &ProblemInstance, pair: &MinEigenpair, q: f64) -> Result<CurvatureReport> {
    check_q(q)?;
    let prm = inst.params();
    let hf = h_family(q, prm.alpha, prm.delta)?;
    let finite_p = 4.0 * q * hf.h2 + 2.0 * hf.h1 + pair.lambda_min / prm.delta;
    let asymptotic = if lambda_min_limit(prm.alpha).is_some() {
        asymptotic_curvature(q, prm.alpha, prm.delta)
    } else {
        f64::NAN
    };
    Ok(CurvatureReport {
        q,
        lambda_min: pair.lambda_min,
        finite_p,
        asymptotic,
        nonconcave: finite_p < 0.0,
    })
}

/// The point `√(pq)·u_min` at which the curvature is probed.
pub fn probe_point(inst: &ProblemInstance, pair: &MinEigenpair, q: f64) -> DVector<f64> {
    &pair.u_min * (inst.p() as f64 * q).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonconcavityScan {
    pub reports: Vec<CurvatureReport>,
    pub any_nonconcave: bool,
}

pub fn scan_nonconcavity(inst: &ProblemInstance, q_grid: &[f64]) -> Result<NonconcavityScan> {
    for &q in q_grid {
        check_q(q)?;
    }
    if q_grid.is_empty() {
        return Ok(NonconcavityScan {
            reports: Vec::new(),
            any_nonconcave: false,
        });
    }
    let pair = min_eigpair(inst);
    let reports = q_grid
        .par_iter()
        .map(|&q| curvature_with(inst, &pair, q))
        .collect::<Result<Vec<_>>>()?;
    let any_nonconcave = reports.iter().any(|r| r.nonconcave);
    Ok(NonconcavityScan {
        reports,
        any_nonconcave,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_instance, ModelParams};
    use nalgebra::{dvector, DMatrix};

    #[test]
    fn asymptotic_examples() {
        assert!((asymptotic_curvature(0.5, 10.0, 0.1) - (-0.4357)).abs() < 1e-4);
        let v = asymptotic_curvature(0.5, 2.0, 0.5);
        let expected = -5.0 / 2.25 + 6.0 + (3.0 - 2.0 * 2f64.sqrt());
        assert!((v - expected).abs() < 1e-14);
        assert!((v - 3.949).abs() < 1e-3);
    }

    #[test]
    fn diagonal_design() {
        let prm = ModelParams::new(3, 1.0, 1.0, 0).unwrap();
        let x = DMatrix::from_diagonal(&dvector![1.0, 2f64.sqrt(), 3f64.sqrt()]);
        let inst = ProblemInstance::from_parts(prm, 0, x, dvector![1.0, 1.0, 1.0], DVector::zeros(3))
            .unwrap();
        let pair = min_eigpair(&inst);
        assert!((pair.lambda_min - 1.0).abs() < 1e-14);
        assert!((pair.u_min[0].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn isotropic_design_accepts_any_unit_vector() {
        let prm = ModelParams::new(4, 1.0, 1.0, 0).unwrap();
        let inst = ProblemInstance::from_parts(
            prm,
            0,
            DMatrix::identity(4, 4),
            dvector![1.0, 1.0, 1.0, 1.0],
            DVector::zeros(4),
        )
        .unwrap();
        let pair = min_eigpair(&inst);
        assert!((pair.lambda_min - 1.0).abs() < 1e-14);
        assert!((pair.u_min.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_q_outside_open_interval() {
        let inst = generate_instance(&ModelParams::new(5, 2.0, 0.5, 0).unwrap(), 0).unwrap();
        assert!(directional_curvature(&inst, 0.0).is_err());
        assert!(directional_curvature(&inst, 1.0).is_err());
        assert!(scan_nonconcavity(&inst, &[]).unwrap().reports.is_empty());
    }

    #[test]
    fn asymptotic_absent_for_square_designs() {
        let inst = generate_instance(&ModelParams::new(5, 1.0, 0.5, 0).unwrap(), 0).unwrap();
        assert!(directional_curvature(&inst, 0.5).unwrap().asymptotic.is_nan());
    }
}
