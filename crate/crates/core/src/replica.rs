//! Replica-symmetric potential for a standard Gaussian prior.
//!
//! With `Σ² = (αΔ + E)/α` the scalar denoising channel has mutual information
//! `−½·ln(Σ²/(Σ² + 1))`, and the potential is
//! `i_RS(E) = −½·ln(Σ²/(Σ²+1)) + ½·(α·ln(1 + E/(αΔ)) − E/Σ²)`.
//! Its unique minimizer `E_Δ` on `(0, 1)` solves `E = (αΔ+E)/(αΔ+E+α)`, and the
//! predicted free energy is `−i_RS(E_Δ) − α/2`.

use serde::Serialize;

use crate::error::{Error, Result};

const DAMPING: f64 = 0.5;
const MAX_FIXED_POINT_ITERS: usize = 200;
const CONSISTENCY_TOL: f64 = 1e-10;

fn sigma_sq(e: f64, alpha: f64, delta: f64) -> f64 {
    (alpha * delta + e) / alpha
}

/// The RS potential `i_RS(E; Δ)`, oriented so that `−min i_RS − α/2` is the free energy.
pub fn i_rs(e: f64, alpha: f64, delta: f64) -> Result<f64> {
    if !(e > 0.0 && e <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "RS potential needs E in (0, 1], got {e}"
        )));
    }
    let s2 = sigma_sq(e, alpha, delta);
    let mutual_info = -0.5 * (s2 / (s2 + 1.0)).ln();
    Ok(mutual_info + 0.5 * (alpha * (e / (alpha * delta)).ln_1p() - e / s2))
}

/// The map `E ↦ (αΔ + E)/(αΔ + E + α)`.
pub fn fixed_point_map(e: f64, alpha: f64, delta: f64) -> f64 {
    let u = alpha * delta + e;
    u / (u + alpha)
}

/// Positive root of `E² + (αΔ + α − 1)·E − αΔ = 0`.
pub fn e_delta_closed_form(alpha: f64, delta: f64) -> f64 {
    let b = alpha * delta + alpha - 1.0;
    let c = alpha * delta;
    let disc = (b * b + 4.0 * c).sqrt();
    if b > 0.0 {
        2.0 * c / (b + disc)
    } else {
        0.5 * (disc - b)
    }
}

/// Damped iteration of [`fixed_point_map`] from `E = 1/2`.
pub fn e_delta_iterated(alpha: f64, delta: f64) -> f64 {
    let mut e = 0.5;
    for _ in 0..MAX_FIXED_POINT_ITERS {
        let next = (1.0 - DAMPING) * e + DAMPING * fixed_point_map(e, alpha, delta);
        if (next - e).abs() <= f64::EPSILON * e {
            return next;
        }
        e = next;
    }
    e
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RsSolution {
    pub alpha: f64,
    pub delta: f64,
    /// Fixed point `E_Δ`.
    pub e_delta: f64,
    /// `Σ²` at the fixed point.
    pub sigma_sq: f64,
    pub i_rs_at_min: f64,
    pub free_energy: f64,
}

pub fn solve_fixed_point(alpha: f64, delta: f64) -> Result<RsSolution> {
    if !(alpha.is_finite() && alpha > 0.0 && delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha and delta must be positive, got {alpha}, {delta}"
        )));
    }
    let closed = e_delta_closed_form(alpha, delta);
    let iterated = e_delta_iterated(alpha, delta);
    let difference = (closed - iterated).abs();
    if difference > CONSISTENCY_TOL {
        return Err(Error::FixedPointInconsistency {
            closed_form: closed,
            iterated,
            difference,
        });
    }
    let e = closed;
    let i_min = i_rs(e, alpha, delta)?;
    Ok(RsSolution {
        alpha,
        delta,
        e_delta: e,
        sigma_sq: sigma_sq(e, alpha, delta),
        i_rs_at_min: i_min,
        free_energy: rs_free_energy_from(e, alpha, delta),
    })
}

/// `−α/2 + (1 − E)/2 − (α/2)·ln(1 + E/(αΔ)) + ½·ln E`.
fn rs_free_energy_from(e: f64, alpha: f64, delta: f64) -> f64 {
    -0.5 * alpha + 0.5 * (1.0 - e) - 0.5 * alpha * (e / (alpha * delta)).ln_1p() + 0.5 * e.ln()
}

/// Asymptotic free energy predicted by the RS formula.
pub fn rs_free_energy(alpha: f64, delta: f64) -> Result<f64> {
    solve_fixed_point(alpha, delta).map(|s| s.free_energy)
}

/// Gaussian-prior MMSE of the channel `√s·X + N`.
pub fn mmse(s: f64) -> f64 {
    1.0 / (1.0 + s)
}

pub fn mmse_inverse(z: f64) -> f64 {
    (1.0 - z) / z
}

/// Solution of `M = mmse(δ/(1 + M))`, i.e. the positive root of `M² + δM − 1 = 0`.
pub fn m_rs(delta: f64) -> f64 {
    let disc = (delta * delta + 4.0).sqrt();
    if delta > 0.0 {
        2.0 / (delta + disc)
    } else {
        0.5 * (disc - delta)
    }
}

pub fn delta_fp(z: f64) -> f64 {
    (1.0 + z) * mmse_inverse(z)
}

pub fn delta_rs(z: f64) -> f64 {
    (1.0 - z * z) / z
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MmseCheck {
    pub z: f64,
    pub delta_fp: f64,
    pub delta_rs: f64,
    /// `M_RS(δ_RS(z))`, which should return `z`.
    pub m_rs: f64,
    /// `|M − mmse(δ/(1 + M))|` at `δ = δ_RS(z)`.
    pub fixed_point_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleCrossingReport {
    pub max_abs_gap: f64,
    pub mmse_checks: Vec<MmseCheck>,
}

/// Evaluates both fixed-point curves on `z_grid ⊂ (0, 1)`.
pub fn single_crossing_suite(z_grid: &[f64]) -> Result<SingleCrossingReport> {
    let mut checks = Vec::with_capacity(z_grid.len());
    for &z in z_grid {
        if !(z > 0.0 && z < 1.0) {
            return Err(Error::InvalidParameter(format!("z must lie in (0, 1), got {z}")));
        }
        let (fp, rs) = (delta_fp(z), delta_rs(z));
        let m = m_rs(rs);
        checks.push(MmseCheck {
            z,
            delta_fp: fp,
            delta_rs: rs,
            m_rs: m,
            fixed_point_residual: (m - mmse(rs / (1.0 + m))).abs(),
        });
    }
    let max_abs_gap = checks
        .iter()
        .map(|c| (c.delta_fp - c.delta_rs).abs())
        .fold(0.0, f64::max);
    Ok(SingleCrossingReport {
        max_abs_gap,
        mmse_checks: checks,
    })
}
