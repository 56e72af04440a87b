//! Monitoring and diagnosis for high-dimensional multistream data.
//!
//! The crate is organized as a pipeline:
//!
//! * [`pca`] - full-spectrum principal component model of the in-control
//!   process (fit from samples or built from a known covariance).
//! * [`monitoring`] - EWMA-smoothed, soft-thresholded scan over all
//!   standardized PC scores with analytic or Monte-Carlo control limits.
//! * [`diagnosis`] - post-alarm sparse shift recovery by adaptive-lasso
//!   regression in PC space, model-selected with BIC.
//! * [`simulation`] - covariance/shift scenario generators plus the
//!   experiment harnesses (false-alarm studies, run-length studies,
//!   diagnosis accuracy studies).
//! * [`benchmarks`] - conventional reduced-dimension PCA control charts
//!   (T^2 and residual Q) used as a comparison baseline.

pub mod benchmarks;
pub mod diagnosis;
pub mod error;
pub mod monitoring;
pub mod pca;
mod rngutil;
pub mod simulation;

pub use error::{Error, Result};
pub use pca::{ModelSource, PCModel, Scores};
