use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{draw_noise, loss_grads_stats, loss_with_noise, Objective};
use super::mmd::{imq_scales, DEFAULT_IMQ_MULTIPLIERS};
use super::network::Mode;
use super::{ArchConfig, ModelError, ModelKind, ModelParams};
use crate::diffcore::AdamState;
use crate::pulsegen::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Weight of the MMD term (WAE only).
    pub lambda: f64,
    /// IMQ scale multipliers `s`; kernel scales are `s * 2 * d_z`.
    pub imq_multipliers: Vec<f64>,
    /// Fraction of samples used for training.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch_size: 64,
            lr: 1e-3,
            lambda: 0.1,
            imq_multipliers: DEFAULT_IMQ_MULTIPLIERS.to_vec(),
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ModelError::InvalidConfig(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ModelError::InvalidConfig(format!("train fraction must lie in (0, 1), got {}", self.train_fraction)));
        }
        if self.batch_size < 2 {
            return Err(ModelError::InvalidConfig("batch size must be at least 2".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ModelError::InvalidConfig(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.imq_multipliers.is_empty() || self.imq_multipliers.iter().any(|s| !(*s > 0.0)) {
            return Err(ModelError::InvalidConfig("IMQ multipliers must be positive".into()));
        }
        Ok(())
    }

    pub fn objective(&self, kind: ModelKind, latent_dim: usize) -> Objective {
        match kind {
            ModelKind::Wae => Objective::Wae { lambda: self.lambda, scales: imq_scales(latent_dim, &self.imq_multipliers) },
            ModelKind::BetaVae { beta } => Objective::Vae { beta },
        }
    }
}

/// Train/test membership as sorted dataset indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Deterministic seeded shuffle, first `round(n * fraction)` indices for training.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 0)));
    let cut = ((n as f64 * train_fraction).round() as usize).min(n);
    let mut train = idx[..cut].to_vec();
    let mut test = idx[cut..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Split { train, test }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_reconstruction: f64,
    pub train_regularizer: f64,
    pub val_loss: Option<f64>,
    pub val_reconstruction: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.9e}"));
        let mut s = String::from("epoch,train_loss,train_reconstruction,train_regularizer,val_loss,val_reconstruction\n");
        for r in &self.epochs {
            s += &format!(
                "{},{:.9e},{:.9e},{:.9e},{},{}\n",
                r.epoch,
                r.train_loss,
                r.train_reconstruction,
                r.train_regularizer,
                opt(r.val_loss),
                opt(r.val_reconstruction)
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        std::fs::File::create(path)?.write_all(self.to_csv().as_bytes())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: TrainHistory,
    pub split: Split,
}

fn gather(profiles: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| profiles[i].clone()).collect()
}

/// Mean of per-batch objective parts weighted by batch size.
struct Accum {
    total: f64,
    recon: f64,
    reg: f64,
    count: usize,
}

impl Accum {
    fn new() -> Self {
        Self { total: 0.0, recon: 0.0, reg: 0.0, count: 0 }
    }

    fn add(&mut self, p: &super::LossParts, n: usize) {
        self.total += p.total * n as f64;
        self.recon += p.reconstruction * n as f64;
        self.reg += p.regularizer * n as f64;
        self.count += n;
    }

    fn mean(&self) -> (f64, f64, f64) {
        let c = self.count as f64;
        (self.total / c, self.recon / c, self.reg / c)
    }
}

/// Held-out objective in eval mode with a fixed noise stream.
fn validate(params: &ModelParams, test: &[Vec<f64>], config: &TrainConfig, objective: &Objective) -> Result<Option<(f64, f64)>, ModelError> {
    if test.len() < 2 {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2, 0));
    let mut acc = Accum::new();
    for chunk in test.chunks(config.batch_size) {
        if chunk.len() < 2 {
            continue;
        }
        let noise = draw_noise(&mut rng, chunk.len(), params.arch.latent_dim);
        acc.add(&loss_with_noise(params, chunk, &noise, objective, Mode::Eval)?, chunk.len());
    }
    let (t, r, _) = acc.mean();
    Ok(Some((t, r)))
}

/// Minibatch Adam training on `profiles` with a seeded train/test split.
pub fn train(profiles: &[Vec<f64>], arch: ArchConfig, kind: ModelKind, config: &TrainConfig) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    let mut params = ModelParams::new(arch, kind, derive_seed(config.seed, 1, 0))?;
    let split = split_indices(profiles.len(), config.train_fraction, config.seed);
    if split.train.len() < 2 {
        return Err(ModelError::Insufficient(format!("{} training samples; at least 2 needed", split.train.len())));
    }
    let train_rows = gather(profiles, &split.train);
    let test_rows = gather(profiles, &split.test);
    let objective = config.objective(kind, params.arch.latent_dim);
    let mut adam = AdamState::new(config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 3, 0));
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut acc = Accum::new();
        for (step, idx) in order.chunks(config.batch_size).enumerate() {
            if idx.len() < 2 {
                log::debug!("epoch {epoch}: skipping trailing batch of {} sample", idx.len());
                continue;
            }
            let batch = gather(&train_rows, idx);
            let noise = draw_noise(&mut rng, batch.len(), params.arch.latent_dim);
            let (parts, grads, stats) = loss_grads_stats(&params, &batch, &noise, &objective, Mode::Train)?;
            if !parts.total.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(ModelError::Divergence { epoch, step: step + 1 });
            }
            adam.step(&mut params.tensors, &grads)?;
            params.update_running(&stats);
            acc.add(&parts, batch.len());
        }
        let (train_loss, train_reconstruction, train_regularizer) = acc.mean();
        let val = validate(&params, &test_rows, config, &objective)?;
        if val.is_some_and(|(v, _)| !v.is_finite()) {
            return Err(ModelError::Divergence { epoch, step: 0 });
        }
        log::info!(
            "epoch {epoch}/{}: loss {train_loss:.6e} (rec {train_reconstruction:.6e}, reg {train_regularizer:.6e}) val {:?}",
            config.epochs,
            val.map(|v| v.0)
        );
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_reconstruction,
            train_regularizer,
            val_loss: val.map(|v| v.0),
            val_reconstruction: val.map(|v| v.1),
        });
    }
    Ok(TrainOutcome { params, history, split })
}
