//! Synthetic regression instances and sphere geometry.
//!
//! An instance is one draw of `y = x·β₀ + √Δ·z` with `x` an `N×p` Gaussian
//! design of entry variance `1/N`, `β₀` uniform on the sphere of radius `√p`
//! and `z` standard normal noise.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, StreamRng};

/// Dimensions, noise level and master seed of a regression model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Signal dimension.
    pub p: usize,
    /// Measurement rate `N/p`.
    pub alpha: f64,
    /// Noise variance.
    pub delta: f64,
    pub master_seed: u64,
}

impl ModelParams {
    pub fn new(p: usize, alpha: f64, delta: f64, master_seed: u64) -> Result<Self> {
        let params = Self {
            p,
            alpha,
            delta,
            master_seed,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidParameter("p must be at least 1".into()));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if !self.delta.is_finite() || self.delta <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "delta must be positive and finite, got {}",
                self.delta
            )));
        }
        if self.n() == 0 {
            return Err(Error::InvalidParameter(format!(
                "round(alpha * p) = 0 for alpha = {}, p = {}",
                self.alpha, self.p
            )));
        }
        Ok(())
    }

    /// Number of measurements, `round(alpha·p)`.
    pub fn n(&self) -> usize {
        (self.alpha * self.p as f64).round() as usize
    }

    /// The realized ratio `N/p`, which differs from `alpha` when `alpha·p` is not an integer.
    pub fn realized_alpha(&self) -> f64 {
        self.n() as f64 / self.p as f64
    }
}

/// One realization of the regression model. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    params: ModelParams,
    stream_tag: u64,
    x: DMatrix<f64>,
    beta0: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
}

const MAX_SIGNAL_RETRIES: usize = 16;

/// Draws an instance from the substreams of `(params.master_seed, stream_tag)`.
pub fn generate_instance(params: &ModelParams, stream_tag: u64) -> Result<ProblemInstance> {
    params.validate()?;
    let (n, p) = (params.n(), params.p);
    let seed = params.master_seed;

    let mut rng = substream(seed, stream_tag, "design");
    let scale = 1.0 / (n as f64).sqrt();
    let x = DMatrix::from_row_iterator(
        n,
        p,
        (0..n * p).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)),
    );

    let mut rng = substream(seed, stream_tag, "signal");
    let beta0 = draw_sphere_point(&mut rng, p, (p as f64).sqrt())?;

    let mut rng = substream(seed, stream_tag, "noise");
    let z = standard_normal_vector(&mut rng, n);

    ProblemInstance::from_parts(*params, stream_tag, x, beta0, z)
}

pub(crate) fn standard_normal_vector(rng: &mut StreamRng, len: usize) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(rng)))
}

/// A point uniform on the sphere of the given radius (normalized Gaussian).
pub(crate) fn draw_sphere_point(
    rng: &mut StreamRng,
    dim: usize,
    radius: f64,
) -> Result<DVector<f64>> {
    for _ in 0..MAX_SIGNAL_RETRIES {
        let g = standard_normal_vector(rng, dim);
        if g.norm() > 0.0 {
            return project_to_sphere(&g, radius);
        }
    }
    Err(Error::UndefinedProjection)
}

impl ProblemInstance {
    /// Assembles an instance from explicit parts; `y` is computed as `x·β₀ + √Δ·z`.
    pub fn from_parts(
        params: ModelParams,
        stream_tag: u64,
        x: DMatrix<f64>,
        beta0: DVector<f64>,
        z: DVector<f64>,
    ) -> Result<Self> {
        params.validate()?;
        check_dims(&params, &x, &beta0, &z)?;
        let y = &x * &beta0 + &z * params.delta.sqrt();
        Ok(Self {
            params,
            stream_tag,
            x,
            beta0,
            z,
            y,
        })
    }

    /// Assembles an instance with an arbitrary response vector. Used for
    /// synthetic designs in tests and for loading serialized documents.
    pub fn with_response(
        params: ModelParams,
        stream_tag: u64,
        x: DMatrix<f64>,
        beta0: DVector<f64>,
        z: DVector<f64>,
        y: DVector<f64>,
    ) -> Result<Self> {
        params.validate()?;
        check_dims(&params, &x, &beta0, &z)?;
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        Ok(Self {
            params,
            stream_tag,
            x,
            beta0,
            z,
            y,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn stream_tag(&self) -> u64 {
        self.stream_tag
    }
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn beta0(&self) -> &DVector<f64> {
        &self.beta0
    }
    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
    pub fn p(&self) -> usize {
        self.x.ncols()
    }
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// `‖y − x·β₀ − √Δ·z‖`.
    pub fn reconstruction_error(&self) -> f64 {
        (&self.y - &self.x * &self.beta0 - &self.z * self.params.delta.sqrt()).norm()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = InstanceDoc {
            p: self.p(),
            n: self.n(),
            alpha: self.params.alpha,
            delta: self.params.delta,
            seed: self.params.master_seed,
            stream: self.stream_tag,
            x: self
                .x
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            beta0: self.beta0.iter().copied().collect(),
            z: self.z.iter().copied().collect(),
            y: self.y.iter().copied().collect(),
        };
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
        doc.serialize(&mut ser)?;
        Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
    }

    /// Parses a serialized instance. The stored `y` must agree with
    /// `x·β₀ + √Δ·z` to `1e-9·√N`.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text)?;
        let params = ModelParams::new(doc.p, doc.alpha, doc.delta, doc.seed)?;
        if doc.x.len() != doc.n || doc.x.iter().any(|r| r.len() != doc.p) {
            return Err(Error::InvalidParameter(
                "design matrix rows do not match declared n and p".into(),
            ));
        }
        let x = DMatrix::from_row_iterator(doc.n, doc.p, doc.x.into_iter().flatten());
        let inst = Self::with_response(
            params,
            doc.stream,
            x,
            DVector::from_vec(doc.beta0),
            DVector::from_vec(doc.z),
            DVector::from_vec(doc.y),
        )?;
        let tol = 1e-9 * (inst.n() as f64).sqrt();
        if inst.reconstruction_error() > tol {
            return Err(Error::InvalidParameter(format!(
                "response does not match x*beta0 + sqrt(delta)*z (error {:e})",
                inst.reconstruction_error()
            )));
        }
        Ok(inst)
    }
}

fn check_dims(
    params: &ModelParams,
    x: &DMatrix<f64>,
    beta0: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<()> {
    if x.ncols() != params.p {
        return Err(Error::DimensionMismatch {
            expected: params.p,
            found: x.ncols(),
        });
    }
    if beta0.len() != params.p {
        return Err(Error::DimensionMismatch {
            expected: params.p,
            found: beta0.len(),
        });
    }
    if z.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: z.len(),
        });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    p: usize,
    n: usize,
    alpha: f64,
    delta: f64,
    seed: u64,
    stream: u64,
    x: Vec<Vec<f64>>,
    beta0: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
}

/// JSON formatter writing every float with 17 significant digits.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{}", format_f64(value))
    }
}

/// Scientific notation with 17 significant digits; round-trips every `f64`.
pub fn format_f64(value: f64) -> String {
    format!("{value:.16e}")
}

/// Rescales `v` onto the centered sphere of the given radius.
pub fn project_to_sphere(v: &DVector<f64>, radius: f64) -> Result<DVector<f64>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter("vector has non-finite entries".into()));
    }
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::UndefinedProjection);
    }
    Ok(v * (radius / norm))
}

/// Largest singular value of a design against the Gaussian tail bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorNormCheck {
    pub sigma_max: f64,
    pub bound: f64,
    pub within: bool,
}

/// Compares `σ_max(x)` with `(√N + √p + k)/√N`, the standard-normal tail
/// bound rescaled to entries of variance `1/N`.
pub fn operator_norm_check(x: &DMatrix<f64>, k: f64) -> OperatorNormCheck {
    let (n, p) = x.shape();
    let sigma_max = if n == 0 || p == 0 {
        0.0
    } else {
        x.singular_values().max()
    };
    let nf = n.max(1) as f64;
    let bound = (nf.sqrt() + (p as f64).sqrt() + k) / nf.sqrt();
    OperatorNormCheck {
        sigma_max,
        bound,
        within: sigma_max <= bound,
    }
}
