//! Pulse synthesis: sampled shaping parameters, spectral fields, a split-step
//! propagation proxy, preprocessing into standardized profiles, and datasets.

mod dataset;
mod envelope;
mod fiber;
mod grid;
mod preprocess;
mod spec;
mod spectral;

pub use dataset::{
    build_dataset, generate_dataset, generate_pair, Dataset, DatasetManifest, DatasetRecord, PulsePair,
    DATASET_FORMAT, DATASET_VERSION, MANIFEST_FILE, MAX_ATTEMPTS, PROFILES_FILE,
};
pub use envelope::{envelope_profile, envelope_value, FLATTOP_EDGE};
pub use fiber::{propagate_splitstep, FiberProxyParams};
pub use grid::{
    FrequencyGrid, TimeGrid, DEFAULT_DELTA_OMEGA, DEFAULT_LAMBDA0, DEFAULT_SPECTRAL_POINTS, PROFILE_POINTS,
    PROFILE_WINDOW, SPEED_OF_LIGHT, STANDARD_SUPPORT,
};
pub use preprocess::{preprocess, pulse_energy, IntensityProfile, ProfileTag, SUPPORT_EPS, SUPPORT_SNAP};
pub use spec::{
    derive_seed, sample_pulse_spec, sample_pulse_spec_attempt, Envelope, PulseSpec, GAUSSIAN_ORDERS, SIGMA_T_MAX,
    SIGMA_T_MIN, TRIANGULAR_ORDERS,
};
pub use spectral::{dispersion_phase, spectral_phase, synthesize_field, temporal_field, to_intensity, SpectralField};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PulseError {
    #[error("invalid pulse spec: {0}")]
    InvalidSpec(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("degenerate pulse: {0}")]
    Degenerate(String),
    #[error("propagation diverged at step {step}")]
    Divergence { step: usize },
    #[error("index {index}: no valid pulse after {attempts} attempts")]
    Exhausted { index: u64, attempts: u32 },
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Canonical preprocessed profile of an unchirped envelope.
pub fn canonical_profile(envelope: Envelope, sigma_t: f64) -> Result<IntensityProfile, PulseError> {
    let grid = FrequencyGrid::default();
    let spec = PulseSpec::unchirped(envelope, sigma_t);
    let field = synthesize_field(&spec, &grid)?;
    preprocess(&to_intensity(&field), &grid.time_grid(), &TimeGrid::profile())
}
