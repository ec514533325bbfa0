use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{as_matrix, LatentError};

/// Principal axes of a point cloud, strongest first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `axes[k]` is the k-th unit axis.
    pub axes: Vec<Vec<f64>>,
    /// Sample variances along each axis (divisor n - 1), non-increasing.
    pub variances: Vec<f64>,
}

/// Sample covariance (divisor n - 1) and mean of the rows of `data`.
pub fn sample_covariance(data: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let n = data.len();
    let d = data[0].len();
    let mut mean = vec![0.0; d];
    for row in data {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let x = as_matrix(data, Some(&mean));
    let cov = x.transpose() * &x / (n as f64 - 1.0).max(1.0);
    (mean, cov)
}

pub fn pca_fit(codes: &[Vec<f64>]) -> Result<PcaModel, LatentError> {
    let d = codes.first().map(|r| r.len()).unwrap_or(0);
    if d == 0 || codes.len() < d + 1 {
        return Err(LatentError::Insufficient(format!("{} samples of dimension {d}", codes.len())));
    }
    if codes.iter().any(|r| r.len() != d) {
        return Err(LatentError::InvalidArgument("ragged input".into()));
    }
    let (mean, cov) = sample_covariance(codes);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut axes = Vec::with_capacity(d);
    let mut variances = Vec::with_capacity(d);
    for &k in &order {
        let mut axis: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = axis.iter().cloned().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        axes.push(axis);
        variances.push(eig.eigenvalues[k].max(0.0));
    }
    Ok(PcaModel { mean, axes, variances })
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn project_one(&self, x: &[f64], k: usize) -> Vec<f64> {
        self.axes[..k]
            .iter()
            .map(|a| a.iter().zip(x).zip(&self.mean).map(|((a, x), m)| a * (x - m)).sum())
            .collect()
    }

    /// `mean + sum_k coords[k] * axes[k]`.
    pub fn reconstruct_one(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, axis) in coords.iter().zip(&self.axes) {
            for (o, a) in out.iter_mut().zip(axis) {
                *o += c * a;
            }
        }
        out
    }

    /// Total variance captured by the first `k` axes.
    pub fn explained(&self, k: usize) -> f64 {
        self.variances[..k].iter().sum()
    }
}

/// Coordinates of `codes` on the first `k` principal axes.
pub fn pca_project(model: &PcaModel, codes: &[Vec<f64>], k: usize) -> Result<Vec<Vec<f64>>, LatentError> {
    if k == 0 || k > model.dim() {
        return Err(LatentError::InvalidArgument(format!("k = {k} outside 1..={}", model.dim())));
    }
    if codes.iter().any(|r| r.len() != model.dim()) {
        return Err(LatentError::InvalidArgument("dimension mismatch".into()));
    }
    Ok(codes.iter().map(|x| model.project_one(x, k)).collect())
}
