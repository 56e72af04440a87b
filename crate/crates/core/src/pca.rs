//! Principal component model of a stationary multivariate stream.
//!
//! The model keeps the *full* eigendecomposition of the covariance (no
//! truncation): monitoring weights every component, and near-null directions
//! are exactly where low-amplitude shifts hide. Rank-deficient fits are
//! handled by flooring eigenvalues at standardization time only; the stored
//! spectrum stays as estimated.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative eigenvalue floor used when none is given explicitly:
/// `eig_floor = DEFAULT_EIG_FLOOR_REL * lambda_1`.
pub const DEFAULT_EIG_FLOOR_REL: f64 = 1e-8;

/// Where a model's spectrum came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSource {
    Fitted,
    Known,
}

/// Scores of one observation under a [`PCModel`].
#[derive(Debug, Clone)]
pub struct Scores {
    /// Raw PC scores y = A' (x - mean).
    pub raw: DVector<f64>,
    /// Standardized scores y_j / sqrt(max(lambda_j, eig_floor)).
    pub standardized: DVector<f64>,
}

/// Full principal component model: mean, eigenvector basis (columns), and
/// the complete eigenvalue spectrum in nonincreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct PCModel {
    mean: DVector<f64>,
    /// p x p orthonormal matrix; column j is the j-th eigenvector.
    eigvecs: DMatrix<f64>,
    /// Nonincreasing, nonnegative.
    eigvals: DVector<f64>,
    eig_floor: f64,
    source: ModelSource,
}

impl PCModel {
    /// Fit a model from an n x p sample matrix (rows are observations) using
    /// the 1/(n-1) sample covariance.
    pub fn fit(samples: &DMatrix<f64>, eig_floor: f64) -> Result<PCModel> {
        let (n, p) = samples.shape();
        if n < 2 {
            return Err(Error::TooFewSamples { min: 2, got: n });
        }
        if p == 0 {
            return Err(Error::invalid("samples", "zero columns"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "samples" });
        }
        check_eig_floor(eig_floor)?;

        let mean = samples.row_mean().transpose();
        let mut centered = samples.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        let (eigvecs, raw) = sorted_symmetric_eigen(cov);
        // A sample covariance is PSD; negative values are roundoff.
        let eigvals = raw.map(|v| v.max(0.0));
        Ok(PCModel { mean, eigvecs, eigvals, eig_floor, source: ModelSource::Fitted })
    }

    /// Fit with the default relative eigenvalue floor (1e-8 of the largest
    /// eigenvalue, or 1e-300 for an all-zero spectrum).
    pub fn fit_default_floor(samples: &DMatrix<f64>) -> Result<PCModel> {
        let mut model = PCModel::fit(samples, 1.0)?;
        model.eig_floor = default_floor(&model.eigvals);
        Ok(model)
    }

    /// Build a model from a known mean and covariance matrix.
    pub fn from_known(mean: DVector<f64>, cov: &DMatrix<f64>, eig_floor: f64) -> Result<PCModel> {
        let p = mean.len();
        if cov.nrows() != p || cov.ncols() != p {
            return Err(Error::DimensionMismatch { expected: p, got: cov.nrows() });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "mean" });
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "covariance" });
        }
        check_eig_floor(eig_floor)?;
        let max_asym = (cov - cov.transpose()).amax();
        if max_asym > 1e-10 {
            return Err(Error::NotSymmetric { max_asym });
        }
        let sym = (cov + cov.transpose()) * 0.5;
        let (eigvecs, raw) = sorted_symmetric_eigen(sym);
        // Clamping absorbs roundoff only; a genuinely negative spectrum is an error.
        let lambda_min = raw.min();
        let lambda_max = raw.max();
        if lambda_min < -1e-10 * lambda_max.max(1.0) {
            return Err(Error::NotPsd { lambda_min });
        }
        let eigvals = raw.map(|v| v.max(0.0));
        Ok(PCModel { mean, eigvecs, eigvals, eig_floor, source: ModelSource::Known })
    }

    /// Same as [`PCModel::from_known`] with the default relative floor.
    pub fn from_known_default_floor(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<PCModel> {
        let mut model = PCModel::from_known(mean, cov, 1.0)?;
        model.eig_floor = default_floor(&model.eigvals);
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Eigenvector matrix A (columns are eigenvectors, orthonormal).
    pub fn eigvecs(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    /// Eigenvalues in nonincreasing order (nonnegative).
    pub fn eigvals(&self) -> &DVector<f64> {
        &self.eigvals
    }

    pub fn eig_floor(&self) -> f64 {
        self.eig_floor
    }

    pub fn source(&self) -> ModelSource {
        self.source
    }

    /// Floored eigenvalue used for standardization of component j.
    pub fn floored_eigval(&self, j: usize) -> f64 {
        self.eigvals[j].max(self.eig_floor)
    }

    /// Project one observation to raw and standardized PC scores.
    pub fn project(&self, x: &DVector<f64>) -> Result<Scores> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "observation" });
        }
        let raw = self.eigvecs.tr_mul(&(x - &self.mean));
        let standardized =
            DVector::from_fn(self.dim(), |j, _| raw[j] / self.floored_eigval(j).sqrt());
        Ok(Scores { raw, standardized })
    }

    /// Per-component standardized magnitude of an original-space mean shift:
    /// delta_j = (A' mu)_j / sqrt(max(lambda_j, eig_floor)).
    pub fn shift_magnitude_profile(&self, mu: &DVector<f64>) -> Result<DVector<f64>> {
        if mu.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: mu.len() });
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "shift vector" });
        }
        let proj = self.eigvecs.tr_mul(mu);
        Ok(DVector::from_fn(self.dim(), |j, _| proj[j] / self.floored_eigval(j).sqrt()))
    }

    /// Serialize to the persistence schema (JSON, eigvecs row-major).
    pub fn to_json(&self) -> String {
        let p = self.dim();
        let json = ModelJson {
            p,
            mean: self.mean.iter().copied().collect(),
            eigvals: self.eigvals.iter().copied().collect(),
            eigvecs: (0..p)
                .flat_map(|i| (0..p).map(move |j| (i, j)))
                .map(|(i, j)| self.eigvecs[(i, j)])
                .collect(),
            eig_floor: self.eig_floor,
            source: self.source,
        };
        serde_json::to_string_pretty(&json).expect("model serialization cannot fail")
    }

    /// Deserialize from the persistence schema, validating shape and finiteness.
    pub fn from_json(text: &str) -> Result<PCModel> {
        let json: ModelJson = serde_json::from_str(text)?;
        let p = json.p;
        if p == 0 {
            return Err(Error::invalid("p", "must be positive"));
        }
        if json.mean.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: json.mean.len() });
        }
        if json.eigvals.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: json.eigvals.len() });
        }
        if json.eigvecs.len() != p * p {
            return Err(Error::DimensionMismatch { expected: p * p, got: json.eigvecs.len() });
        }
        if json.mean.iter().chain(&json.eigvals).chain(&json.eigvecs).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "model file" });
        }
        check_eig_floor(json.eig_floor)?;
        if json.eigvals.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::invalid("eigvals", "must be nonincreasing"));
        }
        if json.eigvals.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("eigvals", "must be nonnegative"));
        }
        Ok(PCModel {
            mean: DVector::from_vec(json.mean),
            eigvecs: DMatrix::from_fn(p, p, |i, j| json.eigvecs[i * p + j]),
            eigvals: DVector::from_vec(json.eigvals),
            eig_floor: json.eig_floor,
            source: json.source,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json())?)
    }

    pub fn load(path: &std::path::Path) -> Result<PCModel> {
        PCModel::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    p: usize,
    mean: Vec<f64>,
    eigvals: Vec<f64>,
    /// Row-major p x p eigenvector matrix.
    eigvecs: Vec<f64>,
    eig_floor: f64,
    source: ModelSource,
}

fn check_eig_floor(eig_floor: f64) -> Result<()> {
    if !(eig_floor.is_finite() && eig_floor > 0.0) {
        return Err(Error::invalid("eig_floor", format!("must be finite and > 0, got {eig_floor}")));
    }
    Ok(())
}

fn default_floor(eigvals: &DVector<f64>) -> f64 {
    let top = eigvals.max();
    if top > 0.0 {
        DEFAULT_EIG_FLOOR_REL * top
    } else {
        1e-300
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted nonincreasing
/// (unclamped, so callers can inspect negative roundoff) and a fixed sign
/// convention: the largest-magnitude entry of each eigenvector is positive
/// (first such entry on ties).
fn sorted_symmetric_eigen(m: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let p = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut vecs = DMatrix::zeros(p, p);
    let mut vals = DVector::zeros(p);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let mut pivot = 0;
        for i in 1..p {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vecs.set_column(dst, &col);
        vals[dst] = eig.eigenvalues[src];
    }
    (vecs, vals)
}
