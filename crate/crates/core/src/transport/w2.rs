use super::{EmissionDensity, TransportError};

pub const DEFAULT_QUADRATURE: usize = 1024;
pub const MIN_QUADRATURE: usize = 64;

/// Quantile-function form of the 1D 2-Wasserstein distance, midpoint rule in `u`.
pub fn w2_1d(a: &EmissionDensity, b: &EmissionDensity, n_quad: usize) -> Result<f64, TransportError> {
    if n_quad < MIN_QUADRATURE {
        return Err(TransportError::InvalidArgument(format!("n_quad {n_quad} < {MIN_QUADRATURE}")));
    }
    Ok(w2_from_quantiles(&a.midpoint_quantiles(n_quad), &b.midpoint_quantiles(n_quad)))
}

/// Root-mean-square difference of two quantile vectors taken at the same nodes.
pub fn w2_from_quantiles(qa: &[f64], qb: &[f64]) -> f64 {
    let s: f64 = qa.iter().zip(qb).map(|(x, y)| (x - y) * (x - y)).sum();
    (s / qa.len() as f64).sqrt()
}
