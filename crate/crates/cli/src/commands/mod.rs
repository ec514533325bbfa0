pub mod eval;
pub mod generate;
pub mod gmm;
pub mod interpolate;
pub mod plots;
pub mod sample;
pub mod train;

use std::path::Path;

use pulseforge::models::{Checkpoint, ModelParams};

use crate::CliError;

pub(crate) fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    if !path.is_file() {
        return Err(CliError::Artifact(format!("{}: checkpoint not found", path.display())));
    }
    Ok(Checkpoint::load(path)?)
}

/// Latent means of `rows`.
pub(crate) fn encode_means(params: &ModelParams, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, CliError> {
    Ok(params.encode(rows)?)
}

/// Fails with an artifact error unless the model accepts profiles of `len` samples.
pub(crate) fn check_profile_len(params: &ModelParams, len: usize) -> Result<(), CliError> {
    if params.arch.input_len != len {
        return Err(CliError::Artifact(format!(
            "model expects {}-sample profiles, dataset has {len}",
            params.arch.input_len
        )));
    }
    Ok(())
}
