//! Latent-space analysis: PCA, Gaussian mixtures, closed-form Gaussian W2
//! distances and reconstruction/geometry metrics.

mod gaussian;
mod gmm;
mod metrics;
mod pca;

pub use gaussian::{gaussian_w2, normalized_pairwise_w2};
pub use gmm::{gmm_fit_em, GmmFit, GmmModel, COVARIANCE_FLOOR};
pub use metrics::{
    distance_correlation, energy_correlation, mse, pearson, snr_db, DistanceCorrelation, EvalReport, COR_BATCHES,
    COR_BATCH_SIZE, SNR_CAP_DB,
};
pub use pca::{pca_fit, pca_project, sample_covariance, PcaModel};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::pulsegen::{canonical_profile, Envelope, TimeGrid};
use crate::transport::{normalize_to_density, w2_1d, TransportError, DEFAULT_QUADRATURE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatentError {
    #[error("not enough samples: {0}")]
    Insufficient(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),
    #[error("degenerate normalization: {0}")]
    Degenerate(String),
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("pulse synthesis failed: {0}")]
    Pulse(String),
}

/// Rows of `data` as an `n x d` matrix, optionally centred.
pub(crate) fn as_matrix(data: &[Vec<f64>], center: Option<&[f64]>) -> DMatrix<f64> {
    let d = data[0].len();
    DMatrix::from_fn(data.len(), d, |i, j| data[i][j] - center.map_or(0.0, |c| c[j]))
}

/// Envelope whose canonical preprocessed shape is closest (1D W2) to each profile.
pub fn nearest_canonical_shape(profiles: &[Vec<f64>], grid: &TimeGrid) -> Result<Vec<(Envelope, f64)>, LatentError> {
    let canon = Envelope::all()
        .into_iter()
        .map(|e| {
            let p = canonical_profile(e, 10e-12).map_err(|err| LatentError::Pulse(err.to_string()))?;
            Ok((e, normalize_to_density(&p.values, &p.grid)?))
        })
        .collect::<Result<Vec<_>, LatentError>>()?;
    profiles
        .iter()
        .map(|p| {
            let d = normalize_to_density(p, grid)?;
            let mut best = (canon[0].0, f64::INFINITY);
            for (e, c) in &canon {
                let w = w2_1d(&d, c, DEFAULT_QUADRATURE)?;
                if w < best.1 {
                    best = (*e, w);
                }
            }
            Ok(best)
        })
        .collect()
}

#[cfg(test)]
mod tests;
