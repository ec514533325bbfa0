use serde::{Deserialize, Serialize};

use super::ModelError;

/// Shape of the convolutional encoder/decoder pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub input_len: usize,
    pub latent_dim: usize,
    /// Output channels of each encoder block; the decoder mirrors them.
    pub channels: Vec<usize>,
    pub kernels: Vec<usize>,
    pub strides: Vec<usize>,
    pub use_residual: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            input_len: 512,
            latent_dim: 32,
            channels: vec![16, 32, 64, 128],
            kernels: vec![7, 5, 5, 3],
            strides: vec![2, 2, 2, 2],
            use_residual: true,
        }
    }
}

impl ArchConfig {
    /// Reduced channel widths for quick CPU runs.
    pub fn desk(latent_dim: usize) -> Self {
        Self { latent_dim, channels: vec![8, 16, 16, 32], ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let b = self.channels.len();
        if b == 0 || self.kernels.len() != b || self.strides.len() != b {
            return Err(ModelError::InvalidConfig("channels, kernels and strides must have equal non-zero length".into()));
        }
        if self.latent_dim == 0 {
            return Err(ModelError::InvalidConfig("latent_dim must be at least 1".into()));
        }
        if self.channels.contains(&0) || self.strides.contains(&0) {
            return Err(ModelError::InvalidConfig("channels and strides must be positive".into()));
        }
        if self.kernels.iter().any(|k| k % 2 == 0) {
            return Err(ModelError::InvalidConfig("kernel sizes must be odd".into()));
        }
        let total: usize = self.strides.iter().product();
        if self.input_len == 0 || self.input_len % total != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "input_len {} not divisible by stride product {total}",
                self.input_len
            )));
        }
        Ok(())
    }

    /// Length of the feature maps after the last encoder block.
    pub fn bottleneck_len(&self) -> usize {
        self.input_len / self.strides.iter().product::<usize>()
    }

    fn needs_projection(&self, c_in: usize, c_out: usize, stride: usize) -> bool {
        stride != 1 || c_in != c_out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelKind {
    Wae,
    BetaVae { beta: f64 },
}

impl ModelKind {
    pub fn head_width(&self, latent_dim: usize) -> usize {
        match self {
            ModelKind::Wae => latent_dim,
            ModelKind::BetaVae { .. } => 2 * latent_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Fan-in used for initialization; 0 marks batch-norm scale/shift.
    #[serde(skip)]
    pub fan_in: usize,
    #[serde(skip)]
    pub init: Init,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Init {
    #[default]
    Uniform,
    Ones,
    Zeros,
}

/// One convolutional block; indices point into the parameter list.
#[derive(Clone, Debug)]
pub(crate) struct Block {
    pub w: usize,
    pub gamma: usize,
    pub beta: usize,
    pub residual: bool,
    /// Projection used on the skip path; `None` with `residual` means identity.
    pub skip: Option<usize>,
    pub bn: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub specs: Vec<ParamSpec>,
    pub bn_channels: Vec<usize>,
    pub enc: Vec<Block>,
    pub head_w: usize,
    pub head_b: usize,
    pub dec_in_w: usize,
    pub dec_in_b: usize,
    pub dec: Vec<Block>,
    pub out_w: usize,
    pub out_b: usize,
    pub out_pad: usize,
}

struct Builder {
    specs: Vec<ParamSpec>,
    bn_channels: Vec<usize>,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, fan_in: usize, init: Init) -> usize {
        self.specs.push(ParamSpec { name, shape, fan_in, init });
        self.specs.len() - 1
    }

    fn bn(&mut self, prefix: &str, c: usize) -> (usize, usize, usize) {
        let g = self.add(format!("{prefix}.bn.gamma"), vec![c], 0, Init::Ones);
        let b = self.add(format!("{prefix}.bn.beta"), vec![c], 0, Init::Zeros);
        self.bn_channels.push(c);
        (g, b, self.bn_channels.len() - 1)
    }
}

impl Layout {
    pub fn new(arch: &ArchConfig, kind: ModelKind) -> Self {
        let mut b = Builder { specs: Vec::new(), bn_channels: Vec::new() };
        let mut enc = Vec::new();
        let mut c_prev = 1;
        for (i, ((&c, &k), &s)) in arch.channels.iter().zip(&arch.kernels).zip(&arch.strides).enumerate() {
            let p = format!("enc.{i}");
            let w = b.add(format!("{p}.conv.w"), vec![c, c_prev, k], c_prev * k, Init::Uniform);
            let (gamma, beta, bn) = b.bn(&p, c);
            let skip = (arch.use_residual && arch.needs_projection(c_prev, c, s))
                .then(|| b.add(format!("{p}.skip.w"), vec![c, c_prev, 1], c_prev, Init::Uniform));
            enc.push(Block { w, gamma, beta, residual: arch.use_residual, skip, bn, stride: s, pad: (k - 1) / 2 });
            c_prev = c;
        }
        let flat = c_prev * arch.bottleneck_len();
        let head = kind.head_width(arch.latent_dim);
        let head_w = b.add("enc.head.w".into(), vec![head, flat], flat, Init::Uniform);
        let head_b = b.add("enc.head.b".into(), vec![head], flat, Init::Uniform);

        let dz = arch.latent_dim;
        let dec_in_w = b.add("dec.in.w".into(), vec![flat, dz], dz, Init::Uniform);
        let dec_in_b = b.add("dec.in.b".into(), vec![flat], dz, Init::Uniform);
        let mut dec = Vec::new();
        let nb = arch.channels.len();
        for i in (0..nb).rev() {
            let c_in = arch.channels[i];
            let c_out = arch.channels[i.saturating_sub(1)];
            let (k, s) = (arch.kernels[i], arch.strides[i]);
            let p = format!("dec.{}", nb - 1 - i);
            // Transposed weights are [c_in, c_out, k]; fan-in counted on the output side.
            let w = b.add(format!("{p}.convt.w"), vec![c_in, c_out, k], c_in * k.div_ceil(s), Init::Uniform);
            let (gamma, beta, bn) = b.bn(&p, c_out);
            let skip = (arch.use_residual && arch.needs_projection(c_in, c_out, s))
                .then(|| b.add(format!("{p}.skip.w"), vec![c_in, c_out, 1], c_in, Init::Uniform));
            dec.push(Block { w, gamma, beta, residual: arch.use_residual, skip, bn, stride: s, pad: (k - 1) / 2 });
        }
        let k0 = arch.kernels[0];
        let c0 = arch.channels[0];
        let out_w = b.add("dec.out.w".into(), vec![1, c0, k0], c0 * k0, Init::Uniform);
        let out_b = b.add("dec.out.b".into(), vec![1], c0 * k0, Init::Uniform);
        Layout {
            specs: b.specs,
            bn_channels: b.bn_channels,
            enc,
            head_w,
            head_b,
            dec_in_w,
            dec_in_b,
            dec,
            out_w,
            out_b,
            out_pad: (k0 - 1) / 2,
        }
    }
}
