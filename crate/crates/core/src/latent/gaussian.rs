use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{GmmModel, LatentError};

/// Relative tolerance for negative eigenvalues still accepted as PSD.
const PSD_TOL: f64 = 1e-9;

fn symmetric(d: usize, cov: &[f64]) -> Result<DMatrix<f64>, LatentError> {
    if cov.len() != d * d {
        return Err(LatentError::InvalidCovariance(format!("{} entries for dimension {d}", cov.len())));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(LatentError::InvalidCovariance("non-finite entry".into()));
    }
    let m = DMatrix::from_row_slice(d, d, cov);
    Ok((&m + m.transpose()) * 0.5)
}

/// Square root of a symmetric PSD matrix with eigenvalues clamped at 0.
fn sqrtm(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LatentError> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if eig.eigenvalues.iter().any(|&v| v < -PSD_TOL * scale) {
        return Err(LatentError::InvalidCovariance(format!(
            "negative eigenvalue {}",
            eig.eigenvalues.min()
        )));
    }
    let roots = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Closed-form 2-Wasserstein distance between two Gaussians.
///
/// Covariances are row-major `d x d` and are symmetrized before use.
pub fn gaussian_w2(mu_i: &[f64], cov_i: &[f64], mu_j: &[f64], cov_j: &[f64]) -> Result<f64, LatentError> {
    let d = mu_i.len();
    if mu_j.len() != d {
        return Err(LatentError::InvalidArgument("mean dimensions differ".into()));
    }
    let si = symmetric(d, cov_i)?;
    let sj = symmetric(d, cov_j)?;
    let root_i = sqrtm(&si)?;
    sqrtm(&sj)?;
    let cross = &root_i * &sj * &root_i;
    let cross = (&cross + cross.transpose()) * 0.5;
    let cross_root = sqrtm(&cross)?;
    let mean_term: f64 = mu_i.iter().zip(mu_j).map(|(a, b)| (a - b) * (a - b)).sum();
    let trace = si.trace() + sj.trace() - 2.0 * cross_root.trace();
    Ok((mean_term + trace).max(0.0).sqrt())
}

/// Pairwise component distances divided by their maximum.
pub fn normalized_pairwise_w2(gmm: &GmmModel) -> Result<Vec<Vec<f64>>, LatentError> {
    let k = gmm.weights.len();
    if k < 2 {
        return Err(LatentError::InvalidArgument("need at least two components".into()));
    }
    let mut w = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = gaussian_w2(&gmm.means[i], &gmm.covariances[i], &gmm.means[j], &gmm.covariances[j])?;
            w[i][j] = v;
            w[j][i] = v;
        }
    }
    let max = w.iter().flatten().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(LatentError::Degenerate("all components coincide".into()));
    }
    for row in w.iter_mut() {
        for v in row.iter_mut() {
            *v /= max;
        }
    }
    Ok(w)
}
