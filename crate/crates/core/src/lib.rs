//! Simulated laser pulse shapes, Wasserstein autoencoders over them, and
//! latent-space transport analysis.

pub mod diffcore;
pub mod latent;
pub mod models;
pub mod pulsegen;
pub mod transport;
