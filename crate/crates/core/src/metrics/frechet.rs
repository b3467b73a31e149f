//! Fréchet distance between Gaussian fits of two feature sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Diagonal load applied when a covariance is close to singular.
pub const COVARIANCE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Mean and unbiased covariance.
fn moments(feats: &[FeatureVector], dim: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = feats.len() as f64;
    let mut mean = DVector::zeros(dim);
    for f in feats {
        mean += DVector::from_column_slice(&f.0);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(dim, dim);
    for f in feats {
        let d = DVector::from_column_slice(&f.0) - &mean;
        cov += &d * d.transpose();
    }
    cov /= n - 1.0;
    (mean, cov)
}

fn symmetric(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Square root of a positive semi-definite matrix; negative eigenvalues are clamped.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetric(m.clone()));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetric(m.clone())).eigenvalues.min()
}

/// Squared Fréchet distance
/// `|μa − μb|² + tr(Σa + Σb − 2 (Σa^½ Σb Σa^½)^½)`.
///
/// When either covariance has an eigenvalue below [`COVARIANCE_EPSILON`], both
/// are loaded with `ε·I` before the square root.
pub fn frechet_distance(a: &[FeatureVector], b: &[FeatureVector]) -> Result<f64> {
    for set in [a, b] {
        if set.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: set.len(),
            });
        }
    }
    let dim = a[0].dim();
    for f in a.iter().chain(b) {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch(dim, f.dim()));
        }
        if f.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite feature value".into()));
        }
    }
    let (mu_a, mut cov_a) = moments(a, dim);
    let (mu_b, mut cov_b) = moments(b, dim);
    if min_eigenvalue(&cov_a) < COVARIANCE_EPSILON || min_eigenvalue(&cov_b) < COVARIANCE_EPSILON {
        let load = DMatrix::identity(dim, dim) * COVARIANCE_EPSILON;
        cov_a += &load;
        cov_b += &load;
    }
    let root_a = psd_sqrt(&cov_a);
    let inner = symmetric(&root_a * &cov_b * &root_a);
    let tr_covmean: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let diff = (mu_a - mu_b).norm_squared();
    Ok((diff + cov_a.trace() + cov_b.trace() - 2.0 * tr_covmean).max(0.0))
}
