use super::{grid::TimeGrid, Envelope, PulseError, PulseSpec};

/// Fraction of sigma_t taken by each raised-cosine flattop edge.
pub const FLATTOP_EDGE: f64 = 0.05;

/// Target intensity of the envelope family at time `t` (seconds), peak 1.
pub fn envelope_value(envelope: Envelope, sigma_t: f64, t: f64) -> f64 {
    let x = 2.0 * t / sigma_t;
    match envelope {
        Envelope::Gaussian { order } => (-std::f64::consts::LN_2 * x.abs().powi(2 * order as i32)).exp(),
        Envelope::Secant => {
            let a = 2f64.sqrt().acosh() * x;
            let c = a.cosh();
            if c.is_finite() {
                1.0 / (c * c)
            } else {
                0.0
            }
        }
        Envelope::Parabolic => (1.0 - x * x).max(0.0),
        Envelope::Triangular { order } => (1.0 - x.abs()).max(0.0).powi(order as i32),
        Envelope::Flattop => {
            let half = 0.5 * sigma_t;
            let edge = FLATTOP_EDGE * sigma_t;
            let a = t.abs();
            if a <= half - edge {
                1.0
            } else if a >= half {
                0.0
            } else {
                0.5 * (1.0 + (std::f64::consts::PI * (a - (half - edge)) / edge).cos())
            }
        }
    }
}

/// Samples the target temporal intensity of `spec` on `grid`.
pub fn envelope_profile(spec: &PulseSpec, grid: &TimeGrid) -> Result<Vec<f64>, PulseError> {
    spec.envelope.validate()?;
    if !(spec.sigma_t > 0.0 && spec.sigma_t.is_finite()) {
        return Err(PulseError::InvalidSpec(format!("sigma_t {}", spec.sigma_t)));
    }
    Ok((0..grid.n_points)
        .map(|j| envelope_value(spec.envelope, spec.sigma_t, grid.time(j)))
        .collect())
}
