//! Emission-time densities, the 1D 2-Wasserstein distance, inverse-transform
//! sampling and W2 geodesics through a decoder.

mod density;
mod geodesic;
mod sampling;
mod w2;

pub use density::{normalize_to_density, EmissionDensity};
pub use geodesic::{
    endpoint_distance, evaluate_path, linear_interpolate, optimality_ratio, optimize_geodesic, path_length,
    path_length_on_tape, Decoder, GeodesicOptions, GeodesicPath,
};
pub use sampling::{
    bin_masses, histogram, histogram_l1, ks_critical_5pct, ks_statistic, sample_emission_times,
    sample_emission_times_with, write_emission_times, write_histogram_csv, Histogram, UniformScheme,
    DEFAULT_PARTICLES, HISTOGRAM_BINS,
};
pub use w2::{w2_1d, w2_from_quantiles, DEFAULT_QUADRATURE, MIN_QUADRATURE};

use thiserror::Error;

use crate::diffcore::DiffError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("degenerate density: {0}")]
    Degenerate(String),
    #[error("probability {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("grid mismatch: {0}")]
    Grid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("waypoint {waypoint}: {reason}")]
    Path { waypoint: usize, reason: String },
    #[error("optimality ratio undefined: endpoint densities coincide")]
    UndefinedRatio,
    #[error("geodesic optimization diverged at step {step}")]
    Divergence { step: usize },
    #[error(transparent)]
    Diff(#[from] DiffError),
}
