//! Covariance-conditioned, normalized energy models for linear inverse
//! problems.
//!
//! The crate is organized bottom-up:
//!
//! - [`covariance`]: diagonal covariances, degradation families, schedules;
//! - [`oracle`]: analytic Gaussian scale mixture and Gaussian field priors;
//! - [`gradengine`]: a small reverse-mode tape with forward tangents;
//! - [`energymodel`]: the [`Energy`] interface and the learned quadratic-mixture energy;
//! - [`training`]: dual (data + covariance) score matching;
//! - [`sampling`]: predictor-corrector posterior sampling with ULA/MALA;
//! - [`density`]: normalization, log-densities and blind estimation.

pub mod checks;
pub mod cli;
pub mod covariance;
pub mod density;
pub mod energymodel;
pub mod error;
pub mod gradengine;
pub mod io;
pub mod numerics;
pub mod oracle;
pub mod record;
pub mod sampling;
pub mod spectral;
pub mod training;

pub use covariance::{CovarianceSchedule, DiagonalCovariance, Domain, GroupPartition, PhiBounds, Shape};
pub use energymodel::{Energy, ModelConfig, QuadraticMixtureEnergy};
pub use error::{Error, Result};
pub use oracle::{GaussianFieldPrior, GaussianScaleMixturePrior};
