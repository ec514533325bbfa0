use serde::{Deserialize, Serialize};

use super::PulseError;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Central wavelength of the shaped pulses.
pub const DEFAULT_LAMBDA0: f64 = 1030e-9;
pub const DEFAULT_SPECTRAL_POINTS: usize = 8192;
/// Spectral resolution: 1.041 GHz expressed as angular frequency.
pub const DEFAULT_DELTA_OMEGA: f64 = 2.0 * std::f64::consts::PI * 1.041e9;

pub const PROFILE_POINTS: usize = 512;
/// Physical span of the 512-sample output grid.
pub const PROFILE_WINDOW: f64 = 40e-12;
/// Standardized support length of every preprocessed pulse.
pub const STANDARD_SUPPORT: f64 = 30e-12;

/// Equidistant angular-frequency grid centred on `omega0`.
///
/// Index `k` corresponds to `omega0 + (k - n/2) * delta_omega`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub n_points: usize,
    pub delta_omega: f64,
    pub omega0: f64,
}

impl FrequencyGrid {
    pub fn new(n_points: usize, delta_omega: f64, lambda0: f64) -> Result<Self, PulseError> {
        if !n_points.is_power_of_two() || n_points < 4 {
            return Err(PulseError::InvalidGrid(format!("{n_points} points is not a power of two >= 4")));
        }
        if !(delta_omega > 0.0 && delta_omega.is_finite()) {
            return Err(PulseError::InvalidGrid(format!("delta_omega {delta_omega}")));
        }
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(PulseError::InvalidSpec(format!("lambda0 {lambda0}")));
        }
        Ok(Self {
            n_points,
            delta_omega,
            omega0: 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / lambda0,
        })
    }

    /// Offset `omega - omega0` of bin `k`.
    pub fn detuning(&self, k: usize) -> f64 {
        (k as f64 - (self.n_points / 2) as f64) * self.delta_omega
    }

    pub fn detunings(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.detuning(k)).collect()
    }

    /// Time grid conjugate to this spectral grid.
    pub fn time_grid(&self) -> TimeGrid {
        let dt = 2.0 * std::f64::consts::PI / (self.n_points as f64 * self.delta_omega);
        TimeGrid {
            n_points: self.n_points,
            delta_t: dt,
            t_min: -((self.n_points / 2) as f64) * dt,
        }
    }
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self::new(DEFAULT_SPECTRAL_POINTS, DEFAULT_DELTA_OMEGA, DEFAULT_LAMBDA0).expect("default grid is valid")
    }
}

/// Equidistant time grid; `t_max = t_min + (n_points - 1) * delta_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n_points: usize,
    pub delta_t: f64,
    pub t_min: f64,
}

impl TimeGrid {
    pub fn new(n_points: usize, delta_t: f64, t_min: f64) -> Result<Self, PulseError> {
        if n_points < 2 || !(delta_t > 0.0) || !t_min.is_finite() {
            return Err(PulseError::InvalidGrid(format!("time grid n={n_points} dt={delta_t}")));
        }
        Ok(Self { n_points, delta_t, t_min })
    }

    /// Grid of `n_points` spanning `[t_min, t_max]`.
    pub fn spanning(n_points: usize, t_min: f64, t_max: f64) -> Result<Self, PulseError> {
        if n_points < 2 || !(t_max > t_min) {
            return Err(PulseError::InvalidGrid(format!("span [{t_min}, {t_max}]")));
        }
        Self::new(n_points, (t_max - t_min) / (n_points - 1) as f64, t_min)
    }

    /// The 512-sample, 40 ps output grid, symmetric about t = 0.
    pub fn profile() -> Self {
        let dt = PROFILE_WINDOW / PROFILE_POINTS as f64;
        Self {
            n_points: PROFILE_POINTS,
            delta_t: dt,
            t_min: -((PROFILE_POINTS - 1) as f64) * dt / 2.0,
        }
    }

    pub fn t_max(&self) -> f64 {
        self.t_min + (self.n_points - 1) as f64 * self.delta_t
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.t_min + self.t_max())
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t_min + j as f64 * self.delta_t
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.time(j)).collect()
    }
}
