use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{grid::DEFAULT_LAMBDA0, PulseError};

pub const TRIANGULAR_ORDERS: [u8; 3] = [1, 2, 4];
pub const GAUSSIAN_ORDERS: [u8; 6] = [1, 2, 3, 4, 5, 10];
pub const SIGMA_T_MIN: f64 = 2e-12;
pub const SIGMA_T_MAX: f64 = 40e-12;

/// Temporal envelope family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Envelope {
    Secant,
    Parabolic,
    Flattop,
    Triangular { order: u8 },
    Gaussian { order: u8 },
}

impl Envelope {
    pub fn family(&self) -> &'static str {
        match self {
            Envelope::Secant => "secant",
            Envelope::Parabolic => "parabolic",
            Envelope::Flattop => "flattop",
            Envelope::Triangular { .. } => "triangular",
            Envelope::Gaussian { .. } => "gaussian",
        }
    }

    pub fn order(&self) -> Option<u8> {
        match self {
            Envelope::Triangular { order } | Envelope::Gaussian { order } => Some(*order),
            _ => None,
        }
    }

    /// Short label such as `G3` or `F`.
    pub fn label(&self) -> String {
        match self {
            Envelope::Secant => "S".into(),
            Envelope::Parabolic => "P".into(),
            Envelope::Flattop => "F".into(),
            Envelope::Triangular { order } => format!("T{order}"),
            Envelope::Gaussian { order } => format!("G{order}"),
        }
    }

    /// Every family/order combination that can be sampled.
    pub fn all() -> Vec<Envelope> {
        let mut v = vec![Envelope::Secant, Envelope::Parabolic, Envelope::Flattop];
        v.extend(TRIANGULAR_ORDERS.iter().map(|&order| Envelope::Triangular { order }));
        v.extend(GAUSSIAN_ORDERS.iter().map(|&order| Envelope::Gaussian { order }));
        v
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        match self {
            Envelope::Triangular { order } if !TRIANGULAR_ORDERS.contains(order) => {
                Err(PulseError::InvalidSpec(format!("triangular order {order}")))
            }
            Envelope::Gaussian { order } if !GAUSSIAN_ORDERS.contains(order) => {
                Err(PulseError::InvalidSpec(format!("gaussian order {order}")))
            }
            _ => Ok(()),
        }
    }
}

/// Shaping parameters of one pulse. All quantities in SI units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub envelope: Envelope,
    /// Characteristic temporal width in seconds.
    pub sigma_t: f64,
    pub phi2: f64,
    pub phi3: f64,
    pub phi4: f64,
    pub lambda0: f64,
    /// Seed of the generator this spec was drawn from.
    pub seed: u64,
}

impl PulseSpec {
    /// A transform-limited pulse (no dispersion).
    pub fn unchirped(envelope: Envelope, sigma_t: f64) -> Self {
        Self {
            envelope,
            sigma_t,
            phi2: 0.0,
            phi3: 0.0,
            phi4: 0.0,
            lambda0: DEFAULT_LAMBDA0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        self.envelope.validate()?;
        if !(SIGMA_T_MIN..=SIGMA_T_MAX).contains(&self.sigma_t) {
            return Err(PulseError::InvalidSpec(format!("sigma_t {} s outside [2, 40] ps", self.sigma_t)));
        }
        if !(self.lambda0 > 0.0) {
            return Err(PulseError::InvalidSpec(format!("lambda0 {}", self.lambda0)));
        }
        if ![self.phi2, self.phi3, self.phi4].iter().all(|v| v.is_finite()) {
            return Err(PulseError::InvalidSpec("non-finite dispersion".into()));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-sample seed as a pure function of `(master_seed, index, attempt)`.
pub fn derive_seed(master_seed: u64, index: u64, attempt: u32) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ index) ^ attempt as u64)
}

/// Draws the shaping parameters of sample `index`.
pub fn sample_pulse_spec(rng_seed: u64, index: u64) -> PulseSpec {
    sample_pulse_spec_attempt(rng_seed, index, 0)
}

/// Like [`sample_pulse_spec`], with a resampling counter mixed into the seed.
pub fn sample_pulse_spec_attempt(rng_seed: u64, index: u64, attempt: u32) -> PulseSpec {
    let seed = derive_seed(rng_seed, index, attempt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let envelope = match rng.random_range(0..5) {
        0 => Envelope::Secant,
        1 => Envelope::Parabolic,
        2 => Envelope::Flattop,
        3 => Envelope::Triangular {
            order: TRIANGULAR_ORDERS[rng.random_range(0..TRIANGULAR_ORDERS.len())],
        },
        _ => Envelope::Gaussian {
            order: GAUSSIAN_ORDERS[rng.random_range(0..GAUSSIAN_ORDERS.len())],
        },
    };
    let sigma_ps: f64 = rng.random_range(2.0..=40.0);
    // Variances are evaluated with sigma_t in picoseconds and yield ps^k.
    let std2 = (100.0 / (3.0 * sigma_ps.powi(2))).sqrt();
    let std3 = (100.0 / (3.0 * sigma_ps.powi(3))).sqrt();
    let std4 = (400.0 / (3.0 * sigma_ps.powi(4))).sqrt();
    let phi2_ps = Normal::new(0.0, std2).expect("positive std").sample(&mut rng);
    let phi3_ps = Normal::new(0.0, std3).expect("positive std").sample(&mut rng);
    let phi4_ps = Normal::new(0.0, std4).expect("positive std").sample(&mut rng);
    PulseSpec {
        envelope,
        sigma_t: sigma_ps * 1e-12,
        phi2: phi2_ps * 1e-24,
        phi3: phi3_ps * 1e-36,
        phi4: phi4_ps * 1e-48,
        lambda0: DEFAULT_LAMBDA0,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed_and_index() {
        assert_eq!(sample_pulse_spec(7, 0), sample_pulse_spec(7, 0));
        assert_ne!(sample_pulse_spec(7, 0), sample_pulse_spec(7, 1));
        assert_ne!(sample_pulse_spec(7, 0), sample_pulse_spec(8, 0));
        assert_ne!(sample_pulse_spec_attempt(7, 0, 1), sample_pulse_spec(7, 0));
    }

    #[test]
    fn samples_satisfy_invariants() {
        for i in 0..2000 {
            let s = sample_pulse_spec(3, i);
            s.validate().unwrap();
        }
    }

    #[test]
    fn family_frequencies_are_uniform() {
        let n = 100_000u64;
        let mut counts = [0usize; 5];
        for i in 0..n {
            let idx = match sample_pulse_spec(11, i).envelope {
                Envelope::Secant => 0,
                Envelope::Parabolic => 1,
                Envelope::Flattop => 2,
                Envelope::Triangular { .. } => 3,
                Envelope::Gaussian { .. } => 4,
            };
            counts[idx] += 1;
        }
        // Binomial(n, 1/5): three standard deviations around n/5.
        let sd = (n as f64 * 0.2 * 0.8).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 / 5.0).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn dispersion_spread_scales_with_width() {
        // Collect phi2 / std(sigma) which must be standard normal.
        let n = 20_000;
        let z: Vec<f64> = (0..n)
            .map(|i| {
                let s = sample_pulse_spec(5, i);
                let sigma_ps = s.sigma_t * 1e12;
                (s.phi2 * 1e24) / (100.0 / (3.0 * sigma_ps * sigma_ps)).sqrt()
            })
            .collect();
        let mean = z.iter().sum::<f64>() / n as f64;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.05);
        assert!((var - 1.0).abs() < 0.05);
        // sigma_t = 10 ps: std(phi2) = sqrt(100 / 300) ps^2
        assert!(((100.0f64 / (3.0 * 100.0)).sqrt() - 0.57735).abs() < 1e-5);
    }

    #[test]
    fn orders_validated() {
        assert!(Envelope::Triangular { order: 3 }.validate().is_err());
        assert!(Envelope::Gaussian { order: 6 }.validate().is_err());
        assert!(Envelope::Gaussian { order: 10 }.validate().is_ok());
        let mut s = PulseSpec::unchirped(Envelope::Flattop, 1e-12);
        assert!(s.validate().is_err());
        s.sigma_t = 10e-12;
        s.lambda0 = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn envelope_json_shape() {
        let j = serde_json::to_string(&Envelope::Gaussian { order: 3 }).unwrap();
        assert_eq!(j, r#"{"family":"gaussian","order":3}"#);
        assert!(serde_json::from_str::<Envelope>(r#"{"family":"lorentzian"}"#).is_err());
    }
}
