//! Radius-constrained least squares and maximization of the TAP functional
//! over the ball `‖a‖² ≤ p`.
//!
//! The inner problem `min ‖y − x·a‖²` subject to `‖a‖ = r` is solved through
//! the secular equation `‖(xᵀx + μI)⁻¹xᵀy‖ = r` with `μ > −λ_min(xᵀx)`. In the
//! eigenbasis of `xᵀx` the norm is `Σ cᵢ²/(λᵢ + μ)²`, strictly decreasing in
//! `μ`, so bisection on the shift `t = μ + λ_min` brackets the root. The shift
//! is bisected geometrically so that it keeps full relative precision next to
//! the pole.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{draw_sphere_point, ProblemInstance};
use crate::rng::substream;
use crate::ridge::ridge_from_gram;
use crate::tap::{f_tap, g_pair_with, gram_matrix, GPair, TapObjective, DOMAIN_EPS};

/// Relative tolerance for `|‖a‖² − r²|`.
const SECULAR_TOL: f64 = 1e-10;
/// Relative weight of `xᵀy` in the minimal eigenspace below which the
/// minimal eigenvector is used for padding.
const HARD_CASE_TOL: f64 = 1e-10;
const DEGENERACY_TOL: f64 = 1e-10;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SecularSolution {
    /// Lagrange multiplier.
    pub mu: f64,
    pub a_mu: DVector<f64>,
    /// `|‖a_mu‖² − r²|`.
    pub norm_gap: f64,
    /// The root could not be reached by the regularized family and the
    /// minimal eigenvector was added to meet the radius.
    pub hard_case: bool,
}

/// Eigendecomposition of `xᵀx` together with `xᵀy` in that basis.
#[derive(Debug, Clone)]
pub struct SecularSystem {
    /// Ascending eigenvalues.
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    /// `Vᵀxᵀy`.
    coeffs: DVector<f64>,
    /// `λᵢ − λ_min`.
    gaps: DVector<f64>,
    /// Size of the (numerically) minimal eigenspace.
    min_multiplicity: usize,
}

impl SecularSystem {
    pub fn new(inst: &ProblemInstance) -> Result<Self> {
        Self::from_gram(gram_matrix(inst.x()), &inst.x().tr_mul(inst.y()))
    }

    pub fn from_gram(gram: DMatrix<f64>, xty: &DVector<f64>) -> Result<Self> {
        let p = gram.nrows();
        if xty.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: xty.len(),
            });
        }
        if gram.iter().any(|v| !v.is_finite()) || xty.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite design or response".into()));
        }
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let eigenvalues = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
        let eigenvectors = DMatrix::from_fn(p, p, |r, c| eig.eigenvectors[(r, order[c])]);
        let coeffs = eigenvectors.tr_mul(xty);
        let lmin = eigenvalues[0];
        let gaps = eigenvalues.map(|l| (l - lmin).max(0.0));
        let scale = eigenvalues[p - 1].abs().max(1.0);
        let min_multiplicity = gaps.iter().take_while(|&&g| g <= DEGENERACY_TOL * scale).count();
        Ok(Self {
            eigenvalues,
            eigenvectors,
            coeffs,
            gaps,
            min_multiplicity,
        })
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// `‖(xᵀx + μI)⁻¹xᵀy‖²` for `μ > −λ_min`.
    pub fn norm_sq_at(&self, mu: f64) -> f64 {
        self.norm_sq_shift(mu + self.lambda_min())
    }

    fn norm_sq_shift(&self, t: f64) -> f64 {
        self.coeffs
            .iter()
            .zip(self.gaps.iter())
            .map(|(c, d)| (c / (d + t)).powi(2))
            .sum()
    }

    fn vector_at_shift(&self, t: f64) -> DVector<f64> {
        let w = DVector::from_iterator(
            self.coeffs.len(),
            self.coeffs.iter().zip(self.gaps.iter()).map(|(c, d)| c / (d + t)),
        );
        &self.eigenvectors * w
    }

    /// `(xᵀx + μI)⁻¹xᵀy`.
    pub fn regularized_solution(&self, mu: f64) -> DVector<f64> {
        self.vector_at_shift(mu + self.lambda_min())
    }

    /// Minimizer of `‖y − x·a‖` on the sphere `‖a‖ = radius`.
    pub fn solve(&self, radius: f64) -> Result<SecularSolution> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "radius must be nonnegative, got {radius}"
            )));
        }
        let p = self.coeffs.len();
        if radius == 0.0 {
            return Ok(SecularSolution {
                mu: f64::INFINITY,
                a_mu: DVector::zeros(p),
                norm_gap: 0.0,
                hard_case: false,
            });
        }
        let target = radius * radius;
        let c_norm = self.coeffs.norm();
        let m = self.min_multiplicity;
        let c_min = self.coeffs.rows(0, m).norm();

        if c_norm == 0.0 || c_min <= HARD_CASE_TOL * c_norm {
            let limit_sq: f64 = (m..p).map(|i| (self.coeffs[i] / self.gaps[i]).powi(2)).sum();
            if limit_sq <= target {
                return Ok(self.pad_hard_case(target, limit_sq));
            }
        }

        let mut hi = c_norm / radius;
        let mut lo = hi;
        let mut steps = 0;
        while self.norm_sq_shift(lo) <= target {
            lo *= 0.5;
            steps += 1;
            if lo < f64::MIN_POSITIVE || steps > 4000 {
                return Err(Error::SecularNonConvergence {
                    mu_lo: lo - self.lambda_min(),
                    mu_hi: hi - self.lambda_min(),
                    iterations: steps,
                    norm_gap: (self.norm_sq_shift(lo) - target).abs(),
                });
            }
        }
        if steps > 0 {
            hi = lo * 2.0;
        }

        let mut t = hi;
        let mut gap = (self.norm_sq_shift(t) - target).abs();
        let mut iterations = 0;
        while gap > 1e-15 * target && iterations < MAX_BISECTIONS {
            let mid = (lo * hi).sqrt();
            if !(mid > lo && mid < hi) {
                break;
            }
            let f = self.norm_sq_shift(mid);
            if f > target {
                lo = mid;
            } else {
                hi = mid;
            }
            t = mid;
            gap = (f - target).abs();
            iterations += 1;
        }
        if gap > SECULAR_TOL * target {
            return Err(Error::SecularNonConvergence {
                mu_lo: lo - self.lambda_min(),
                mu_hi: hi - self.lambda_min(),
                iterations,
                norm_gap: gap,
            });
        }
        let a_mu = self.vector_at_shift(t);
        Ok(SecularSolution {
            mu: t - self.lambda_min(),
            norm_gap: (a_mu.norm_squared() - target).abs(),
            a_mu,
            hard_case: false,
        })
    }

    fn pad_hard_case(&self, target: f64, limit_sq: f64) -> SecularSolution {
        let p = self.coeffs.len();
        let m = self.min_multiplicity;
        let w = DVector::from_fn(p, |i, _| {
            if i == 0 {
                (target - limit_sq).max(0.0).sqrt()
            } else if i < m {
                0.0
            } else {
                self.coeffs[i] / self.gaps[i]
            }
        });
        let a_mu = &self.eigenvectors * w;
        SecularSolution {
            mu: -self.lambda_min(),
            norm_gap: (a_mu.norm_squared() - target).abs(),
            a_mu,
            hard_case: true,
        }
    }
}

/// Minimizer of `‖y − x·a‖` on the sphere of the given radius.
pub fn constrained_least_squares(inst: &ProblemInstance, radius: f64) -> Result<SecularSolution> {
    SecularSystem::new(inst)?.solve(radius)
}

/// Options for [`maximize_tap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TapOptimizerOptions {
    /// Total number of starts: one ridge start plus `restarts − 1` random ones.
    pub restarts: usize,
    pub max_iters: usize,
    /// Stopping threshold on the feasible gradient norm; `None` means `1e-8·√p`.
    pub grad_tol: Option<f64>,
    /// Overlaps of the random starts, cycled if shorter than needed.
    pub q_init_list: Vec<f64>,
    pub backtrack: f64,
    pub armijo: f64,
}

impl Default for TapOptimizerOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iters: 5000,
            grad_tol: None,
            q_init_list: vec![0.1, 0.3, 0.5, 0.7, 0.9, 0.5, 0.5],
            backtrack: 0.5,
            armijo: 1e-4,
        }
    }
}

impl TapOptimizerOptions {
    pub fn grad_tol_for(&self, p: usize) -> f64 {
        self.grad_tol.unwrap_or(1e-8 * (p as f64).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StartKind {
    Ridge,
    Random { index: usize },
}

/// Trace of one projected-gradient-ascent run.
#[derive(Debug, Clone, PartialEq)]
pub struct AscentRun {
    pub start: StartKind,
    pub a: DVector<f64>,
    /// Objective after each accepted step; first entry is the start value.
    pub f_history: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest `‖a‖²` over all iterates.
    pub max_norm_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RestartSummary {
    pub start: StartKind,
    pub f_value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub a_hat: DVector<f64>,
    /// `f_TAP(a_hat)` recomputed from the design.
    pub f_value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub restarts_used: usize,
    pub converged: bool,
    pub q_final: f64,
    pub best_start: StartKind,
    pub restarts: Vec<RestartSummary>,
}

fn project_ball(a: &mut DVector<f64>, max_norm_sq: f64) {
    let n2 = a.norm_squared();
    if n2 > max_norm_sq {
        *a *= (max_norm_sq / n2).sqrt();
    }
}

/// Gradient with the outward radial component removed on the boundary.
fn feasible_gradient(a: &DVector<f64>, g: &DVector<f64>, max_norm_sq: f64) -> DVector<f64> {
    let n2 = a.norm_squared();
    let radial = a.dot(g);
    if n2 >= max_norm_sq * (1.0 - 1e-12) && radial > 0.0 {
        g - a * (radial / n2)
    } else {
        g.clone()
    }
}

/// Projected gradient ascent on the ball `‖a‖² ≤ p(1 − ε)` with Armijo
/// backtracking from a Barzilai–Borwein trial step.
pub fn projected_gradient_ascent(
    obj: &TapObjective,
    start: DVector<f64>,
    kind: StartKind,
    opts: &TapOptimizerOptions,
    delta: f64,
) -> AscentRun {
    let p = obj.dim();
    let max_norm_sq = p as f64 * (1.0 - DOMAIN_EPS);
    let tol = opts.grad_tol_for(p);
    let mut a = start;
    project_ball(&mut a, max_norm_sq);
    let mut max_seen = a.norm_squared();

    let Some((mut f, mut g)) = obj.value_and_grad(&a) else {
        return AscentRun {
            start: kind,
            f_history: vec![obj.value(&a)],
            a,
            grad_norm: f64::INFINITY,
            iterations: 0,
            converged: false,
            max_norm_sq: max_seen,
        };
    };
    let mut history = vec![f];
    let mut step = p as f64 * delta;
    let mut iterations = 0;
    let mut grad_norm = feasible_gradient(&a, &g, max_norm_sq).norm();

    while iterations < opts.max_iters && grad_norm > tol {
        let mut s = step;
        let mut accepted = None;
        for _ in 0..80 {
            let mut cand = &a + &g * s;
            project_ball(&mut cand, max_norm_sq);
            if let Some((fc, gc)) = obj.value_and_grad(&cand) {
                let predicted = g.dot(&(&cand - &a));
                if fc >= f + opts.armijo * predicted && fc >= f {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            s *= opts.backtrack;
        }
        let Some((cand, fc, gc)) = accepted else {
            break;
        };
        let ds = &cand - &a;
        let dg = &gc - &g;
        let curv = ds.dot(&dg);
        step = if curv < 0.0 {
            -ds.norm_squared() / curv
        } else {
            2.0 * s
        };
        a = cand;
        f = fc;
        g = gc;
        max_seen = max_seen.max(a.norm_squared());
        history.push(f);
        iterations += 1;
        grad_norm = feasible_gradient(&a, &g, max_norm_sq).norm();
    }

    AscentRun {
        start: kind,
        a,
        f_history: history,
        grad_norm,
        iterations,
        converged: grad_norm <= tol,
        max_norm_sq: max_seen,
    }
}

fn starting_points(
    inst: &ProblemInstance,
    a_ridge: &DVector<f64>,
    opts: &TapOptimizerOptions,
) -> Result<Vec<(StartKind, DVector<f64>)>> {
    let p = inst.p();
    let prm = inst.params();
    let mut starts = Vec::with_capacity(opts.restarts.max(1));
    starts.push((StartKind::Ridge, a_ridge.clone()));
    for index in 0..opts.restarts.saturating_sub(1) {
        if opts.q_init_list.is_empty() {
            return Err(Error::InvalidParameter(
                "random restarts requested but q_init_list is empty".into(),
            ));
        }
        let q = opts.q_init_list[index % opts.q_init_list.len()];
        if !(0.0..1.0).contains(&q) {
            return Err(Error::InvalidParameter(format!("initial overlap {q} not in [0, 1)")));
        }
        let mut rng = substream(
            prm.master_seed,
            inst.stream_tag(),
            &format!("tap-restart-{index}"),
        );
        let point = if q == 0.0 {
            DVector::zeros(p)
        } else {
            draw_sphere_point(&mut rng, p, (p as f64 * q).sqrt())?
        };
        starts.push((StartKind::Random { index }, point));
    }
    Ok(starts)
}

/// Best of several projected-gradient-ascent runs on `f_TAP`.
pub fn maximize_tap(inst: &ProblemInstance, opts: &TapOptimizerOptions) -> Result<OptResult> {
    let obj = TapObjective::new(inst);
    let a_ridge = ridge_from_gram(obj.gram(), obj.xty(), inst.params().delta)?;
    maximize_tap_with(inst, &obj, &a_ridge, opts)
}

/// [`maximize_tap`] with a precomputed objective and ridge solution.
pub fn maximize_tap_with(
    inst: &ProblemInstance,
    obj: &TapObjective,
    a_ridge: &DVector<f64>,
    opts: &TapOptimizerOptions,
) -> Result<OptResult> {
    if opts.restarts == 0 {
        return Err(Error::InvalidParameter("at least one restart is required".into()));
    }
    let delta = inst.params().delta;
    let starts = starting_points(inst, a_ridge, opts)?;
    let runs: Vec<AscentRun> = starts
        .into_par_iter()
        .map(|(kind, start)| projected_gradient_ascent(obj, start, kind, opts, delta))
        .collect();

    let mut summaries = Vec::with_capacity(runs.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, run) in runs.iter().enumerate() {
        let value = f_tap(&run.a, inst)?.value.to_f64();
        let failed = run.iterations == 0 && !run.converged;
        summaries.push(RestartSummary {
            start: run.start,
            f_value: value,
            iterations: run.iterations,
            converged: run.converged,
        });
        if failed || !value.is_finite() {
            continue;
        }
        if best.is_none_or(|(_, b)| value > b) {
            best = Some((i, value));
        }
    }
    let Some((bi, f_value)) = best else {
        let detail = summaries
            .iter()
            .map(|s| format!("{:?}: f = {:e}", s.start, s.f_value))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::OptimizationFailed {
            restarts: summaries.len(),
            detail,
        });
    };
    let run = &runs[bi];
    Ok(OptResult {
        q_final: run.a.norm_squared() / inst.p() as f64,
        a_hat: run.a.clone(),
        f_value,
        grad_norm: run.grad_norm,
        iterations: run.iterations,
        restarts_used: runs.len(),
        converged: run.converged,
        best_start: run.start,
        restarts: summaries,
    })
}

/// `(q, g_TAP(q), g(q))` along a grid in `[0, 1 − ε]`.
pub fn profile_over_q(inst: &ProblemInstance, q_grid: &[f64]) -> Result<Vec<GPair>> {
    if let Some(&q) = q_grid
        .iter()
        .find(|&&q| !(0.0..=1.0 - DOMAIN_EPS).contains(&q))
    {
        return Err(Error::InvalidParameter(format!("grid point {q} outside [0, 1 - eps]")));
    }
    let system = SecularSystem::new(inst)?;
    q_grid
        .par_iter()
        .map(|&q| g_pair_with(q, inst, &system))
        .collect()
}
