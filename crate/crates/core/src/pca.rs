//! Principal component analysis as the linear baseline.
//!
//! The covariance is normalized by `n`, matching [`crate::datasets::standardize`].

use nalgebra::{DMatrix, SymmetricEigen};

use crate::datasets::DataMatrix;
use crate::eigen::magnitude_order;
use crate::error::{Error, Result};
use crate::spectral::{Embedding, EmbeddingSource};

#[derive(Clone, Debug)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `p x k`, orthonormal columns.
    pub components: DMatrix<f64>,
    /// Leading `k` covariance eigenvalues, descending.
    pub explained_variance: Vec<f64>,
    /// All `p` covariance eigenvalues, descending.
    pub all_variances: Vec<f64>,
    pub total_variance: f64,
    pub column_names: Vec<String>,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.ncols()
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }
}

pub fn pca_fit(x: &DataMatrix, k: usize) -> Result<PcaModel> {
    let p = x.ncols();
    if k > p {
        return Err(Error::param(format!("cannot keep {k} components of {p} columns")));
    }
    let n = x.nrows() as f64;
    let values = x.values();
    let mean: Vec<f64> = (0..p).map(|j| values.column(j).sum() / n).collect();
    let mut centered = values.clone();
    for j in 0..p {
        centered.column_mut(j).add_scalar_mut(-mean[j]);
    }
    let cov = (centered.transpose() * &centered) / n;
    let cov = (&cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(cov);
    // Covariance is positive semidefinite; clamp round-off below zero.
    let raw: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    let order = magnitude_order(&raw);
    let all_variances: Vec<f64> = order.iter().map(|&i| raw[i]).collect();
    let mut components = DMatrix::from_fn(p, k, |r, c| eig.eigenvectors[(r, order[c])]);
    for c in 0..k {
        let mut best = 0;
        for r in 1..p {
            if components[(r, c)].abs() > components[(best, c)].abs() {
                best = r;
            }
        }
        if components[(best, c)] < 0.0 {
            components.column_mut(c).neg_mut();
        }
    }
    let total_variance = (0..p).map(|j| centered.column(j).norm_squared() / n).sum();
    Ok(PcaModel {
        mean,
        explained_variance: all_variances[..k].to_vec(),
        all_variances,
        components,
        total_variance,
        column_names: x.column_names().to_vec(),
    })
}

pub fn pca_transform(model: &PcaModel, x: &DataMatrix) -> Result<Embedding> {
    if x.ncols() != model.p() {
        return Err(Error::Dimension(format!(
            "model fitted on {} columns, data has {}",
            model.p(),
            x.ncols()
        )));
    }
    let mut centered = x.values().clone();
    for j in 0..model.p() {
        centered.column_mut(j).add_scalar_mut(-model.mean[j]);
    }
    Ok(Embedding {
        coords: centered * &model.components,
        component_indices: (1..=model.k()).collect(),
        t: 0,
        source: EmbeddingSource::Pca,
    })
}

/// Lift `n x k` scores back to data space and re-add the mean.
pub fn pca_inverse(model: &PcaModel, scores: &DMatrix<f64>) -> Result<DataMatrix> {
    if scores.ncols() != model.k() {
        return Err(Error::Dimension(format!(
            "model has {} components, scores have {} columns",
            model.k(),
            scores.ncols()
        )));
    }
    let mut lifted = scores * model.components.transpose();
    for j in 0..model.p() {
        lifted.column_mut(j).add_scalar_mut(model.mean[j]);
    }
    DataMatrix::new(lifted, model.column_names.clone())
}

/// Residual variance after keeping `k` components, as a fraction of the
/// total variance: one minus the relative explained variance.
pub fn pca_reconstruction_error(model: &PcaModel, k: usize) -> Result<f64> {
    if k > model.p() {
        return Err(Error::param(format!("k = {k} exceeds p = {}", model.p())));
    }
    if model.total_variance == 0.0 {
        return Ok(0.0);
    }
    let residual: f64 = model.all_variances[k..].iter().sum();
    Ok(residual / model.total_variance)
}
