//! TAP free energy for Bayesian linear regression with a uniform prior on the
//! sphere of radius `√p`.
//!
//! The crate evaluates and maximizes the TAP functional on finite instances
//! and cross-checks it against closed-form asymptotics:
//!
//! - [`model`]: instance generation, serialization and sphere geometry.
//! - [`tap`]: the TAP functional, its derivatives and the ridge surrogate.
//! - [`sphere`]: the sphere-constrained least-squares solver and the
//!   projected-gradient maximizer.
//! - [`asymptotics`]: Marchenko–Pastur limits of ridge statistics.
//! - [`replica`]: the replica-symmetric potential for a Gaussian prior.
//! - [`ridge`]: ridge solution, exact and Monte Carlo free energies.
//! - [`concavity`]: curvature along the minimal eigenvector of `xᵀx`.
//! - [`experiment`]: config-driven sweeps with CSV and SVG output.
//!
//! ```
//! use tapreg::{asymptotics, replica};
//!
//! let rs = replica::solve_fixed_point(2.0, 0.5).unwrap();
//! assert!((rs.e_delta - asymptotics::stieltjes_t(0.5, 2.0)).abs() < 1e-12);
//! assert!((rs.free_energy + 1.494_367).abs() < 1e-6);
//! ```

pub mod asymptotics;
pub mod concavity;
pub mod error;
pub mod experiment;
pub mod model;
pub mod replica;
pub mod ridge;
pub mod rng;
pub mod sphere;
pub mod tap;

pub use error::{Error, Result};
pub use model::{generate_instance, ModelParams, ProblemInstance};

// Code listings in the guide are compiled and run as doctests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/tap.md")]
    mod tap {}
    #[doc = include_str!("../../../book/src/optimization.md")]
    mod optimization {}
    #[doc = include_str!("../../../book/src/asymptotics.md")]
    mod asymptotics {}
    #[doc = include_str!("../../../book/src/free_energy.md")]
    mod free_energy {}
    #[doc = include_str!("../../../book/src/concavity.md")]
    mod concavity {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
