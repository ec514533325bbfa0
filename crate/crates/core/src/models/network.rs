use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{Block, Init, Layout, ParamSpec};
use super::{ArchConfig, ModelError, ModelKind};
use crate::diffcore::{DiffError, Tape, Tensor, Var, BN_EPS, BN_MOMENTUM, LEAKY_SLOPE};
use crate::pulsegen::{TimeGrid, PROFILE_POINTS};
use crate::transport::Decoder;

/// Rows processed per tape when encoding or decoding in eval mode.
const EVAL_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch-norm layers.
    Train,
    /// Frozen running statistics.
    Eval,
}

/// Encoder/decoder weights (stored as `f32`) plus batch-norm running statistics.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub arch: ArchConfig,
    pub kind: ModelKind,
    pub tensors: Vec<Vec<f32>>,
    pub running_mean: Vec<Vec<f32>>,
    pub running_var: Vec<Vec<f32>>,
    layout: Layout,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch
            && self.kind == other.kind
            && self.tensors == other.tensors
            && self.running_mean == other.running_mean
            && self.running_var == other.running_var
    }
}

/// Batch statistics gathered by a training-mode forward pass, one slot per batch-norm layer.
pub(crate) type BnStats = Vec<Option<(Vec<f64>, Vec<f64>)>>;

pub(crate) struct Ctx<'a> {
    pub params: &'a ModelParams,
    pub vars: Vec<Var>,
    pub mode: Mode,
    pub stats: BnStats,
}

impl ModelParams {
    /// Freshly initialized parameters: uniform in `±1/sqrt(fan_in)`, batch-norm scale 1 and shift 0.
    pub fn new(arch: ArchConfig, kind: ModelKind, seed: u64) -> Result<Self, ModelError> {
        arch.validate()?;
        if let ModelKind::BetaVae { beta } = kind {
            if !(beta >= 0.0 && beta.is_finite()) {
                return Err(ModelError::InvalidConfig(format!("beta must be finite and non-negative, got {beta}")));
            }
        }
        let layout = Layout::new(&arch, kind);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = layout
            .specs
            .iter()
            .map(|s| {
                let n: usize = s.shape.iter().product();
                match s.init {
                    Init::Ones => vec![1.0; n],
                    Init::Zeros => vec![0.0; n],
                    Init::Uniform => {
                        let bound = 1.0 / (s.fan_in as f64).sqrt();
                        (0..n).map(|_| rng.random_range(-bound..bound) as f32).collect()
                    }
                }
            })
            .collect();
        let running_mean = layout.bn_channels.iter().map(|&c| vec![0.0; c]).collect();
        let running_var = layout.bn_channels.iter().map(|&c| vec![1.0; c]).collect();
        Ok(Self { arch, kind, tensors, running_mean, running_var, layout })
    }

    /// Rebuilds parameters from stored values; shapes are checked against the architecture.
    pub fn from_parts(
        arch: ArchConfig,
        kind: ModelKind,
        tensors: Vec<Vec<f32>>,
        running_mean: Vec<Vec<f32>>,
        running_var: Vec<Vec<f32>>,
    ) -> Result<Self, ModelError> {
        arch.validate()?;
        let layout = Layout::new(&arch, kind);
        let ok = tensors.len() == layout.specs.len()
            && tensors.iter().zip(&layout.specs).all(|(t, s)| t.len() == s.shape.iter().product::<usize>())
            && running_mean.len() == layout.bn_channels.len()
            && running_var.len() == layout.bn_channels.len()
            && layout.bn_channels.iter().zip(running_mean.iter().zip(&running_var)).all(|(&c, (m, v))| m.len() == c && v.len() == c);
        if !ok {
            return Err(ModelError::Shape("stored tensors do not match the architecture".into()));
        }
        Ok(Self { arch, kind, tensors, running_mean, running_var, layout })
    }

    pub fn param_specs(&self) -> &[ParamSpec] {
        &self.layout.specs
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub(crate) fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<Vec<Var>, DiffError> {
        self.tensors
            .iter()
            .zip(&self.layout.specs)
            .map(|(t, s)| {
                let t = Tensor::from_f32(s.shape.clone(), t)?;
                Ok(if trainable { tape.param(t) } else { tape.constant(t) })
            })
            .collect()
    }

    pub(crate) fn ctx(&self, tape: &mut Tape, trainable: bool, mode: Mode) -> Result<Ctx<'_>, DiffError> {
        Ok(Ctx { params: self, vars: self.bind(tape, trainable)?, mode, stats: vec![None; self.layout.bn_channels.len()] })
    }

    /// Moves running statistics toward the batch statistics of one training step.
    pub(crate) fn update_running(&mut self, stats: &BnStats) {
        for (i, s) in stats.iter().enumerate() {
            if let Some((mean, var)) = s {
                for (r, m) in self.running_mean[i].iter_mut().zip(mean) {
                    *r = ((1.0 - BN_MOMENTUM) * *r as f64 + BN_MOMENTUM * m) as f32;
                }
                for (r, v) in self.running_var[i].iter_mut().zip(var) {
                    *r = ((1.0 - BN_MOMENTUM) * *r as f64 + BN_MOMENTUM * v) as f32;
                }
            }
        }
    }

    fn check_rows(&self, rows: &[Vec<f64>], width: usize, what: &str) -> Result<(), ModelError> {
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(ModelError::Shape(format!("{what} rows must have {width} values, got {}", r.len())));
        }
        Ok(())
    }

    fn rows_tensor(rows: &[Vec<f64>], width: usize) -> Result<Tensor, DiffError> {
        Tensor::new(vec![rows.len(), width], rows.iter().flatten().copied().collect())
    }

    /// Eval-mode encoder head output for each row (`2 d_z` values for the VAE).
    pub fn encode_raw(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        self.check_rows(batch, self.arch.input_len, "input")?;
        let width = self.kind.head_width(self.arch.latent_dim);
        let mut out = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(EVAL_CHUNK) {
            let mut tape = Tape::new();
            let mut ctx = self.ctx(&mut tape, false, Mode::Eval)?;
            let x = tape.constant(Self::rows_tensor(chunk, self.arch.input_len)?);
            let h = encoder(&mut tape, &mut ctx, x)?;
            let t = tape.value(h);
            out.extend((0..chunk.len()).map(|i| t.row(i)[..width].to_vec()));
        }
        Ok(out)
    }

    /// Deterministic latent codes; the posterior mean for the VAE.
    pub fn encode(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        let d = self.arch.latent_dim;
        Ok(self.encode_raw(batch)?.into_iter().map(|mut r| {
            r.truncate(d);
            r
        }).collect())
    }

    /// Posterior mean and log-variance; the log-variance is `None` for the WAE.
    #[allow(clippy::type_complexity)]
    pub fn encode_distribution(&self, batch: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Option<Vec<Vec<f64>>>), ModelError> {
        let d = self.arch.latent_dim;
        let raw = self.encode_raw(batch)?;
        match self.kind {
            ModelKind::Wae => Ok((raw, None)),
            ModelKind::BetaVae { .. } => {
                let (mu, lv) = raw.into_iter().map(|r| (r[..d].to_vec(), r[d..].to_vec())).unzip();
                Ok((mu, Some(lv)))
            }
        }
    }

    /// Eval-mode decoding of latent codes to `input_len` samples in `(-1, 1)`.
    pub fn decode(&self, codes: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        self.check_rows(codes, self.arch.latent_dim, "code")?;
        let mut out = Vec::with_capacity(codes.len());
        for chunk in codes.chunks(EVAL_CHUNK) {
            let mut tape = Tape::new();
            let mut ctx = self.ctx(&mut tape, false, Mode::Eval)?;
            let z = tape.constant(Self::rows_tensor(chunk, self.arch.latent_dim)?);
            let y = decoder(&mut tape, &mut ctx, z)?;
            let t = tape.value(y);
            out.extend((0..chunk.len()).map(|i| t.row(i).to_vec()));
        }
        Ok(out)
    }

    /// `decode(encode(batch))` in eval mode.
    pub fn reconstruct(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        self.decode(&self.encode(batch)?)
    }
}

fn batch_norm(tape: &mut Tape, ctx: &mut Ctx, blk: &Block, h: Var) -> Result<Var, DiffError> {
    let (g, b) = (ctx.vars[blk.gamma], ctx.vars[blk.beta]);
    match ctx.mode {
        Mode::Train => {
            let (y, mean, var) = tape.batch_norm_train(h, g, b, BN_EPS)?;
            ctx.stats[blk.bn] = Some((mean, var));
            Ok(y)
        }
        Mode::Eval => {
            let p = ctx.params;
            let m: Vec<f64> = p.running_mean[blk.bn].iter().map(|&v| v as f64).collect();
            let v: Vec<f64> = p.running_var[blk.bn].iter().map(|&v| v as f64).collect();
            tape.batch_norm_eval(h, g, b, &m, &v, BN_EPS)
        }
    }
}

/// conv (or transposed conv) → batch-norm → leaky ReLU, plus the skip path.
fn block(tape: &mut Tape, ctx: &mut Ctx, blk: &Block, x: Var, transposed: bool) -> Result<Var, DiffError> {
    let s = blk.stride;
    let conv = |tape: &mut Tape, w: Var, pad: usize| {
        if transposed {
            tape.conv_transpose1d(x, w, None, s, pad, s - 1)
        } else {
            tape.conv1d(x, w, None, s, pad)
        }
    };
    let h = conv(tape, ctx.vars[blk.w], blk.pad)?;
    let h = batch_norm(tape, ctx, blk, h)?;
    let h = tape.leaky_relu(h, LEAKY_SLOPE);
    if !blk.residual {
        return Ok(h);
    }
    let skip = match blk.skip {
        Some(i) => conv(tape, ctx.vars[i], 0)?,
        None => x,
    };
    tape.add(h, skip)
}

/// `[n, input_len]` → encoder head output `[n, head_width]`.
pub(crate) fn encoder(tape: &mut Tape, ctx: &mut Ctx, x: Var) -> Result<Var, DiffError> {
    let n = tape.shape(x)[0];
    let layout = &ctx.params.layout;
    let mut h = tape.reshape(x, vec![n, 1, ctx.params.arch.input_len])?;
    for blk in &layout.enc {
        h = block(tape, ctx, blk, h, false)?;
    }
    let flat = tape.value(h).len() / n;
    let h = tape.reshape(h, vec![n, flat])?;
    tape.linear(h, ctx.vars[layout.head_w], Some(ctx.vars[layout.head_b]))
}

/// `[n, d_z]` → reconstructions `[n, input_len]`.
pub(crate) fn decoder(tape: &mut Tape, ctx: &mut Ctx, z: Var) -> Result<Var, DiffError> {
    let n = tape.shape(z)[0];
    let layout = &ctx.params.layout;
    let arch = &ctx.params.arch;
    let h = tape.linear(z, ctx.vars[layout.dec_in_w], Some(ctx.vars[layout.dec_in_b]))?;
    let h = tape.leaky_relu(h, LEAKY_SLOPE);
    let c_last = *arch.channels.last().expect("validated non-empty");
    let mut h = tape.reshape(h, vec![n, c_last, arch.bottleneck_len()])?;
    for blk in &layout.dec {
        h = block(tape, ctx, blk, h, true)?;
    }
    let h = tape.conv1d(h, ctx.vars[layout.out_w], Some(ctx.vars[layout.out_b]), 1, layout.out_pad)?;
    let h = tape.tanh(h);
    tape.reshape(h, vec![n, arch.input_len])
}

impl Decoder for ModelParams {
    fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    fn output_grid(&self) -> TimeGrid {
        let g = TimeGrid::profile();
        if self.arch.input_len == PROFILE_POINTS {
            g
        } else {
            let t_min = -(self.arch.input_len as f64 - 1.0) / 2.0 * g.delta_t;
            TimeGrid::new(self.arch.input_len, g.delta_t, t_min).expect("positive length and step")
        }
    }

    fn decode_on_tape(&self, tape: &mut Tape, codes: Var) -> Result<Var, DiffError> {
        let mut ctx = self.ctx(tape, false, Mode::Eval)?;
        decoder(tape, &mut ctx, codes)
    }

    fn decode(&self, codes: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, DiffError> {
        ModelParams::decode(self, codes).map_err(|e| DiffError::Shape(e.to_string()))
    }
}
