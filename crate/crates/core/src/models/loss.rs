use rand::Rng;
use rand_distr::StandardNormal;

use super::mmd::mmd_on_tape;
use super::network::{decoder, encoder, BnStats, Mode};
use super::{ModelError, ModelKind, ModelParams};
use crate::diffcore::{Tape, Tensor, Var};

/// Regularized objective used for one training step.
#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    /// Reconstruction + `lambda * MMD²` against prior draws, with absolute IMQ scales.
    Wae { lambda: f64, scales: Vec<f64> },
    /// Reconstruction + `beta * KL` with reparameterized sampling.
    Vae { beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub reconstruction: f64,
    /// `MMD²` for the WAE, mean KL for the VAE (before weighting).
    pub regularizer: f64,
}

/// Closed-form `KL(N(mu, diag exp(logvar)) || N(0, I))` for one sample.
pub fn kl_standard_normal(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu.iter().zip(logvar).map(|(m, lv)| m * m + lv.exp() - 1.0 - lv).sum::<f64>()
}

/// Random draws the objective consumes: prior samples for the WAE, `eps` for the VAE.
pub fn draw_noise<R: Rng>(rng: &mut R, n: usize, latent_dim: usize) -> Vec<f64> {
    (0..n * latent_dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn check_objective(params: &ModelParams, objective: &Objective) -> Result<(), ModelError> {
    match (params.kind, objective) {
        (ModelKind::Wae, Objective::Wae { lambda, .. }) if *lambda >= 0.0 => Ok(()),
        (ModelKind::BetaVae { .. }, Objective::Vae { beta }) if *beta >= 0.0 => Ok(()),
        (ModelKind::Wae, Objective::Wae { .. }) | (ModelKind::BetaVae { .. }, Objective::Vae { .. }) => {
            Err(ModelError::InvalidConfig("loss weight must be non-negative".into()))
        }
        (kind, _) => Err(ModelError::KindMismatch(format!("{kind:?} cannot use {objective:?}"))),
    }
}

pub(crate) struct LossVars {
    pub total: Var,
    pub reconstruction: Var,
    pub regularizer: Var,
    pub stats: BnStats,
}

/// Records the full objective on `tape`. `noise` has `n * d_z` standard-normal values.
pub(crate) fn loss_on_tape(
    tape: &mut Tape,
    params: &ModelParams,
    batch: &[Vec<f64>],
    noise: &[f64],
    objective: &Objective,
    mode: Mode,
    trainable: bool,
) -> Result<(LossVars, Vec<Var>), ModelError> {
    check_objective(params, objective)?;
    let (n, len, dz) = (batch.len(), params.arch.input_len, params.arch.latent_dim);
    if n < 2 {
        return Err(ModelError::Shape(format!("batch of {n} rows; at least 2 needed")));
    }
    if batch.iter().any(|r| r.len() != len) {
        return Err(ModelError::Shape(format!("batch rows must have {len} values")));
    }
    if noise.len() != n * dz {
        return Err(ModelError::Shape("noise length".into()));
    }
    let mut ctx = params.ctx(tape, trainable, mode)?;
    let x = tape.constant(Tensor::new(vec![n, len], batch.iter().flatten().copied().collect())?);
    let head = encoder(tape, &mut ctx, x)?;
    let noise = tape.constant(Tensor::new(vec![n, dz], noise.to_vec())?);
    let (z, regularizer, weight) = match objective {
        Objective::Wae { lambda, scales } => {
            let mmd = mmd_on_tape(tape, head, noise, scales)?;
            (head, mmd, *lambda)
        }
        Objective::Vae { beta } => {
            let mu = tape.slice_cols(head, 0, dz)?;
            let lv = tape.slice_cols(head, dz, 2 * dz)?;
            let half = tape.scale(lv, 0.5);
            let std = tape.exp(half);
            let spread = tape.mul(std, noise)?;
            let z = tape.add(mu, spread)?;
            // KL per sample = 0.5 * sum(mu² + exp(lv) - 1 - lv); averaged over the batch.
            let mu2 = tape.square(mu);
            let var = tape.exp(lv);
            let a = tape.add(mu2, var)?;
            let b = tape.sub(a, lv)?;
            let s = tape.sum(b);
            let s = tape.offset(s, -((n * dz) as f64));
            let kl = tape.scale(s, 0.5 / n as f64);
            (z, kl, *beta)
        }
    };
    let y = decoder(tape, &mut ctx, z)?;
    let reconstruction = tape.mse(y, x)?;
    let weighted = tape.scale(regularizer, weight);
    let total = tape.add(reconstruction, weighted)?;
    Ok((LossVars { total, reconstruction, regularizer, stats: ctx.stats }, ctx.vars))
}

fn parts(tape: &Tape, v: &LossVars) -> LossParts {
    LossParts {
        total: tape.value(v.total).item(),
        reconstruction: tape.value(v.reconstruction).item(),
        regularizer: tape.value(v.regularizer).item(),
    }
}

/// Objective value with fixed noise.
pub fn loss_with_noise(
    params: &ModelParams,
    batch: &[Vec<f64>],
    noise: &[f64],
    objective: &Objective,
    mode: Mode,
) -> Result<LossParts, ModelError> {
    let mut tape = Tape::new();
    let (v, _) = loss_on_tape(&mut tape, params, batch, noise, objective, mode, false)?;
    Ok(parts(&tape, &v))
}

/// Objective value and its gradient for every parameter tensor, in layout order.
pub fn loss_and_gradients(
    params: &ModelParams,
    batch: &[Vec<f64>],
    noise: &[f64],
    objective: &Objective,
    mode: Mode,
) -> Result<(LossParts, Vec<Vec<f64>>), ModelError> {
    let (p, g, _) = loss_grads_stats(params, batch, noise, objective, mode)?;
    Ok((p, g))
}

pub(crate) fn loss_grads_stats(
    params: &ModelParams,
    batch: &[Vec<f64>],
    noise: &[f64],
    objective: &Objective,
    mode: Mode,
) -> Result<(LossParts, Vec<Vec<f64>>, BnStats), ModelError> {
    let mut tape = Tape::new();
    let (v, vars) = loss_on_tape(&mut tape, params, batch, noise, objective, mode, true)?;
    let p = parts(&tape, &v);
    if !p.total.is_finite() {
        return Ok((p, Vec::new(), v.stats));
    }
    let grads = tape.backward(v.total)?;
    let g = vars
        .iter()
        .zip(params.param_specs())
        .map(|(&var, s)| grads.get_or_zeros(var, &s.shape).into_data())
        .collect();
    Ok((p, g, v.stats))
}

/// WAE objective: `MSE(x, G(E(x))) + lambda * MMD²(E(x), prior draws)`.
pub fn wae_loss<R: Rng>(
    params: &ModelParams,
    batch: &[Vec<f64>],
    rng: &mut R,
    lambda: f64,
    scales: &[f64],
    mode: Mode,
) -> Result<LossParts, ModelError> {
    let noise = draw_noise(rng, batch.len(), params.arch.latent_dim);
    loss_with_noise(params, batch, &noise, &Objective::Wae { lambda, scales: scales.to_vec() }, mode)
}

/// β-VAE objective: `MSE + beta * KL` with `z = mu + sigma * eps`.
pub fn vae_loss<R: Rng>(
    params: &ModelParams,
    batch: &[Vec<f64>],
    rng: &mut R,
    beta: f64,
    mode: Mode,
) -> Result<LossParts, ModelError> {
    let noise = draw_noise(rng, batch.len(), params.arch.latent_dim);
    loss_with_noise(params, batch, &noise, &Objective::Vae { beta }, mode)
}
