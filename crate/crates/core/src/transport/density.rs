use crate::pulsegen::TimeGrid;

use super::TransportError;

/// Normalized emission-time density with its cumulative distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionDensity {
    pub grid: TimeGrid,
    pub pdf: Vec<f64>,
    pub cdf: Vec<f64>,
}

/// Trapezoid cumulative sums `C_j` of clamped values; `C_0 = 0`.
pub(crate) fn cumulative_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut c = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    c.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * dt * (w[0].max(0.0) + w[1].max(0.0));
        c.push(acc);
    }
    c
}

/// Piecewise-linear generalized inverse of a CDF sampled on a uniform grid.
///
/// Returns the quantile and the index `j` of the upper bracketing node
/// (`j >= 1`, `cdf[j - 1] < u <= cdf[j]`).
pub(crate) fn quantile_on(cdf: &[f64], t_min: f64, dt: f64, u: f64) -> (f64, usize) {
    let n = cdf.len();
    if u <= 0.0 {
        let j = cdf.partition_point(|&f| f <= 0.0).clamp(1, n - 1);
        return (t_min + (j - 1) as f64 * dt, j);
    }
    let j = cdf.partition_point(|&f| f < u).clamp(1, n - 1);
    let (f0, f1) = (cdf[j - 1], cdf[j]);
    let frac = if f1 > f0 { ((u - f0) / (f1 - f0)).clamp(0.0, 1.0) } else { 1.0 };
    (t_min + ((j - 1) as f64 + frac) * dt, j)
}

/// Clamps `values` at zero and normalizes by the trapezoid integral.
pub fn normalize_to_density(values: &[f64], grid: &TimeGrid) -> Result<EmissionDensity, TransportError> {
    if values.len() != grid.n_points {
        return Err(TransportError::Grid(format!("{} values on a {}-point grid", values.len(), grid.n_points)));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(TransportError::Degenerate("NaN in profile".into()));
    }
    let c = cumulative_trapezoid(values, grid.delta_t);
    let total = *c.last().expect("grid has at least two points");
    if !(total > 0.0 && total.is_finite()) {
        return Err(TransportError::Degenerate("no positive mass".into()));
    }
    Ok(EmissionDensity {
        grid: *grid,
        pdf: values.iter().map(|v| v.max(0.0) / total).collect(),
        cdf: c.iter().map(|v| v / total).collect(),
    })
}

impl EmissionDensity {
    pub fn quantile(&self, u: f64) -> Result<f64, TransportError> {
        if !(0.0..=1.0).contains(&u) {
            return Err(TransportError::OutOfRange(u));
        }
        Ok(quantile_on(&self.cdf, self.grid.t_min, self.grid.delta_t, u).0)
    }

    /// Quantiles at the midpoints `(m + 1/2) / n_quad`.
    pub fn midpoint_quantiles(&self, n_quad: usize) -> Vec<f64> {
        (0..n_quad)
            .map(|m| {
                let u = (m as f64 + 0.5) / n_quad as f64;
                quantile_on(&self.cdf, self.grid.t_min, self.grid.delta_t, u).0
            })
            .collect()
    }

    /// Linear interpolation of the CDF, 0 before the grid and 1 after it.
    pub fn cdf_at(&self, t: f64) -> f64 {
        let x = (t - self.grid.t_min) / self.grid.delta_t;
        if x <= 0.0 {
            return 0.0;
        }
        let last = self.cdf.len() - 1;
        if x >= last as f64 {
            return 1.0;
        }
        let j = x.floor() as usize;
        let s = x - j as f64;
        self.cdf[j] + s * (self.cdf[j + 1] - self.cdf[j])
    }

    pub fn mean(&self) -> f64 {
        let q = self.midpoint_quantiles(4096);
        q.iter().sum::<f64>() / q.len() as f64
    }
}
