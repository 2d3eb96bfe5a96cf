//! Marchenko–Pastur trace functional and the large-`p` limits of ridge
//! statistics.
//!
//! For `A_t = xᵀx + t·I` with `x` an `N×p` design of entry variance `1/N`
//! and `N/p → α`, `(1/p)·tr(A_t⁻¹) → T(t)/t` where `T(t)` is the positive
//! root of `T² + (α − 1 + tα)·T − αt = 0`.

use serde::Serialize;

/// `T(t)`, evaluated without cancellation for large `tα`.
pub fn stieltjes_t(t: f64, alpha: f64) -> f64 {
    let b = 1.0 - alpha - t * alpha;
    let disc = (b * b + 4.0 * alpha * t).sqrt();
    if b < 0.0 {
        2.0 * alpha * t / (disc - b)
    } else {
        0.5 * (b + disc)
    }
}

/// Limit of `(1/p)·tr((xᵀx + t·I)⁻¹)`.
pub fn trace_inverse_limit(t: f64, alpha: f64) -> f64 {
    stieltjes_t(t, alpha) / t
}

/// Limits of the ridge solution `a_Δ = (xᵀx + Δ·I)⁻¹xᵀy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RidgeAsymptotics {
    /// `T(Δ)`.
    pub t_delta: f64,
    /// Limit of `‖a_Δ‖²/p`, equal to `1 − T(Δ)`.
    pub q_delta: f64,
    /// Limit of `‖y − x·a_Δ‖²/p`.
    pub residual_limit: f64,
    /// Limit of the TAP functional evaluated at `a_Δ`.
    pub tap_at_ridge: f64,
    /// Almost-sure limit of the smallest eigenvalue of `xᵀx`; only defined for `α > 1`.
    pub lambda_min_limit: Option<f64>,
}

pub fn ridge_asymptotics(alpha: f64, delta: f64) -> RidgeAsymptotics {
    let t_delta = stieltjes_t(delta, alpha);
    let q_delta = 1.0 - t_delta;
    let residual_limit = delta * t_delta + delta * (alpha - 1.0);
    let tap_at_ridge = -0.5 * alpha + 0.5 * q_delta
        - 0.5 * alpha * (1.0 + (1.0 - q_delta) / (delta * alpha)).ln()
        + 0.5 * (1.0 - q_delta).ln();
    RidgeAsymptotics {
        t_delta,
        q_delta,
        residual_limit,
        tap_at_ridge,
        lambda_min_limit: lambda_min_limit(alpha),
    }
}

/// `(1 − α^{-1/2})²` for `α > 1`.
pub fn lambda_min_limit(alpha: f64) -> Option<f64> {
    (alpha > 1.0).then(|| (1.0 - alpha.recip().sqrt()).powi(2))
}
