use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    spectral::{spectrum_to_time, time_to_spectrum},
    PulseError, SpectralField,
};

/// Parameters of the split-step propagation proxy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberProxyParams {
    /// Group-velocity dispersion in s^2/m.
    pub beta2: f64,
    /// Nonlinear coefficient in 1/(W m).
    pub gamma_nl: f64,
    /// Fiber length in metres.
    pub length: f64,
    pub n_steps: usize,
}

impl Default for FiberProxyParams {
    /// 2 ps^2 of accumulated dispersion and a peak nonlinear phase of about
    /// 4 rad for an unchirped unit-peak input.
    fn default() -> Self {
        Self {
            beta2: 20e-27,
            gamma_nl: 0.04,
            length: 100.0,
            n_steps: 64,
        }
    }
}

impl FiberProxyParams {
    pub fn validate(&self) -> Result<(), PulseError> {
        if self.n_steps < 1 {
            return Err(PulseError::InvalidSpec("fiber n_steps must be >= 1".into()));
        }
        if !(self.length >= 0.0 && self.length.is_finite()) {
            return Err(PulseError::InvalidSpec(format!("fiber length {}", self.length)));
        }
        if !self.beta2.is_finite() || !self.gamma_nl.is_finite() {
            return Err(PulseError::InvalidSpec("non-finite fiber coefficients".into()));
        }
        Ok(())
    }
}

/// Symmetric split-step evolution: half dispersion, full nonlinear phase, half dispersion.
pub fn propagate_splitstep(field: &SpectralField, params: &FiberProxyParams) -> Result<SpectralField, PulseError> {
    params.validate()?;
    let grid = field.grid;
    let dt = grid.time_grid().delta_t;
    let h = params.length / params.n_steps as f64;
    let half: Vec<Complex64> = (0..grid.n_points)
        .map(|k| {
            let d = grid.detuning(k);
            Complex64::from_polar(1.0, params.beta2 * d * d * h / 4.0)
        })
        .collect();
    let mut buf = field.values.clone();
    for step in 0..params.n_steps {
        for (v, d) in buf.iter_mut().zip(&half) {
            *v *= d;
        }
        spectrum_to_time(&mut buf, grid.delta_omega);
        for v in buf.iter_mut() {
            *v *= Complex64::from_polar(1.0, params.gamma_nl * v.norm_sqr() * h);
        }
        time_to_spectrum(&mut buf, dt);
        for (v, d) in buf.iter_mut().zip(&half) {
            *v *= d;
        }
        if !buf.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(PulseError::Divergence { step });
        }
    }
    Ok(SpectralField { grid, values: buf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulsegen::{synthesize_field, to_intensity, Envelope, FrequencyGrid, PulseSpec};

    const PS: f64 = 1e-12;

    #[test]
    fn identity_without_dispersion_or_nonlinearity() {
        let grid = FrequencyGrid::default();
        let f = synthesize_field(&PulseSpec::unchirped(Envelope::Secant, 5.0 * PS), &grid).unwrap();
        let p = FiberProxyParams { beta2: 0.0, gamma_nl: 0.0, length: 3.0, n_steps: 8 };
        let g = propagate_splitstep(&f, &p).unwrap();
        let scale = f.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (a, b) in f.values.iter().zip(&g.values) {
            assert!((a - b).norm() < 1e-12 * scale);
        }
    }

    #[test]
    fn energy_conserved() {
        let grid = FrequencyGrid::default();
        let mut spec = PulseSpec::unchirped(Envelope::Parabolic, 4.0 * PS);
        spec.phi2 = 0.5e-24;
        let f = synthesize_field(&spec, &grid).unwrap();
        let g = propagate_splitstep(&f, &FiberProxyParams::default()).unwrap();
        assert!((g.energy() - f.energy()).abs() < 1e-6 * f.energy());
    }

    #[test]
    fn dispersion_only_matches_gvd_broadening() {
        let grid = FrequencyGrid::default();
        let tgrid = grid.time_grid();
        let tau0 = 2.0 * PS;
        let f = synthesize_field(&PulseSpec::unchirped(Envelope::Gaussian { order: 1 }, tau0), &grid).unwrap();
        let p = FiberProxyParams { beta2: 20e-27, gamma_nl: 0.0, length: 150.0, n_steps: 4 };
        let g = propagate_splitstep(&f, &p).unwrap();
        let i = to_intensity(&g);
        let gdd = p.beta2 * p.length;
        let expect = tau0 * (1.0 + (4.0 * std::f64::consts::LN_2 * gdd / (tau0 * tau0)).powi(2)).sqrt();
        let got = crate::pulsegen::spectral::tests::fwhm(&i, &tgrid);
        assert!((got - expect).abs() < 2e-3 * expect, "{got} vs {expect}");
    }

    #[test]
    fn rejects_zero_steps() {
        let grid = FrequencyGrid::new(64, 1e11, 1e-6).unwrap();
        let f = SpectralField { grid, values: vec![Complex64::new(1.0, 0.0); 64] };
        let p = FiberProxyParams { n_steps: 0, ..Default::default() };
        assert!(propagate_splitstep(&f, &p).is_err());
    }

    #[test]
    fn overflow_reported_as_divergence() {
        let grid = FrequencyGrid::new(64, 1e11, 1e-6).unwrap();
        let f = SpectralField { grid, values: vec![Complex64::new(1e300, 0.0); 64] };
        let p = FiberProxyParams { beta2: 0.0, gamma_nl: 1.0, length: 1.0, n_steps: 2 };
        assert!(matches!(propagate_splitstep(&f, &p), Err(PulseError::Divergence { .. })));
    }
}
