use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{envelope::envelope_profile, grid::FrequencyGrid, PulseError, PulseSpec};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Complex spectrum E(omega) on a centred frequency grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub grid: FrequencyGrid,
    pub values: Vec<Complex64>,
}

impl SpectralField {
    /// Parseval energy `(1/2pi) * sum |E|^2 * delta_omega`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.delta_omega / (2.0 * std::f64::consts::PI)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

fn alternate_sign(buf: &mut [Complex64]) {
    for v in buf.iter_mut().skip(1).step_by(2) {
        *v = -*v;
    }
}

/// In place: time samples on the conjugate grid to E(omega_k) = dt * sum_j a_j e^{i Delta_k t_j}.
pub(crate) fn time_to_spectrum(buf: &mut [Complex64], delta_t: f64) {
    alternate_sign(buf);
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    fft.process(buf);
    alternate_sign(buf);
    for v in buf.iter_mut() {
        *v *= delta_t;
    }
}

/// In place: E(omega_k) to a_j = (d_omega / 2pi) * sum_k E_k e^{-i Delta_k t_j}.
pub(crate) fn spectrum_to_time(buf: &mut [Complex64], delta_omega: f64) {
    alternate_sign(buf);
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(buf);
    alternate_sign(buf);
    let scale = delta_omega / (2.0 * std::f64::consts::PI);
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

pub fn dispersion_phase(phi2: f64, phi3: f64, phi4: f64, delta: f64) -> f64 {
    let d2 = delta * delta;
    0.5 * phi2 * d2 + phi3 * d2 * delta / 6.0 + phi4 * d2 * d2 / 24.0
}

/// Spectral phase of `spec` at every bin of `grid`.
pub fn spectral_phase(spec: &PulseSpec, grid: &FrequencyGrid) -> Vec<f64> {
    (0..grid.n_points)
        .map(|k| dispersion_phase(spec.phi2, spec.phi3, spec.phi4, grid.detuning(k)))
        .collect()
}

/// Builds E(omega) from the temporal envelope of `spec` and its dispersion.
pub fn synthesize_field(spec: &PulseSpec, grid: &FrequencyGrid) -> Result<SpectralField, PulseError> {
    let tgrid = grid.time_grid();
    let intensity = envelope_profile(spec, &tgrid)?;
    let mut buf: Vec<Complex64> = intensity.iter().map(|&i| Complex64::new(i.sqrt(), 0.0)).collect();
    time_to_spectrum(&mut buf, tgrid.delta_t);
    let phase = spectral_phase(spec, grid);
    for (v, p) in buf.iter_mut().zip(&phase) {
        *v *= Complex64::from_polar(1.0, *p);
    }
    Ok(SpectralField { grid: *grid, values: buf })
}

/// Complex temporal field E(t) on the conjugate time grid.
pub fn temporal_field(field: &SpectralField) -> Vec<Complex64> {
    let mut buf = field.values.clone();
    spectrum_to_time(&mut buf, field.grid.delta_omega);
    buf
}

/// I(t) = |E(t)|^2 on `field.grid.time_grid()`.
pub fn to_intensity(field: &SpectralField) -> Vec<f64> {
    temporal_field(field).iter().map(|v| v.norm_sqr()).collect()
}
