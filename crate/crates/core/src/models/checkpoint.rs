use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchConfig, ModelError, ModelKind, ModelParams, Split, TrainConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PFWM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Dataset identity and held-out membership recorded at training time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub dataset_count: usize,
    pub dataset_seed: Option<u64>,
    #[serde(flatten)]
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    arch: ArchConfig,
    kind: ModelKind,
    /// Parameter tensors in blob order; running means then variances follow.
    tensors: Vec<TensorEntry>,
    batch_norm_channels: Vec<usize>,
    train_config: Option<TrainConfig>,
    split: Option<SplitRecord>,
    final_metrics: BTreeMap<String, f64>,
}

/// Model parameters together with the metadata stored beside them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub train_config: Option<TrainConfig>,
    pub split: Option<SplitRecord>,
    pub final_metrics: BTreeMap<String, f64>,
}

impl Checkpoint {
    pub fn new(params: ModelParams) -> Self {
        Self { params, train_config: None, split: None, final_metrics: BTreeMap::new() }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let p = &self.params;
        let header = Header {
            arch: p.arch.clone(),
            kind: p.kind,
            tensors: p.param_specs().iter().map(|s| TensorEntry { name: s.name.clone(), shape: s.shape.clone() }).collect(),
            batch_norm_channels: p.running_mean.iter().map(Vec::len).collect(),
            train_config: self.train_config.clone(),
            split: self.split.clone(),
            // JSON has no representation for non-finite numbers.
            final_metrics: self.final_metrics.iter().filter(|(_, v)| v.is_finite()).map(|(k, v)| (k.clone(), *v)).collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + json.len() + 4 * p.parameter_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in p.tensors.iter().chain(&p.running_mean).chain(&p.running_var).flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let corrupt = |m: &str| ModelError::Corrupt(m.to_string());
        if bytes.len() < 16 {
            return Err(corrupt("file shorter than the fixed preamble"));
        }
        if &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Version { found: version, expected: CHECKPOINT_VERSION });
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if body.len() < hlen {
            return Err(corrupt("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| ModelError::Corrupt(format!("header: {e}")))?;
        let blob = &body[hlen..];
        let sizes: Vec<usize> = header
            .tensors
            .iter()
            .map(|t| t.shape.iter().product())
            .chain(header.batch_norm_channels.iter().copied())
            .chain(header.batch_norm_channels.iter().copied())
            .collect();
        let total: usize = sizes.iter().sum();
        if blob.len() != 4 * total {
            return Err(corrupt(&format!("parameter blob has {} bytes, header declares {}", blob.len(), 4 * total)));
        }
        let mut values = blob.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
        let mut groups: Vec<Vec<f32>> = sizes.iter().map(|&n| values.by_ref().take(n).collect()).collect();
        let nb = header.batch_norm_channels.len();
        let running_var = groups.split_off(groups.len() - nb);
        let running_mean = groups.split_off(groups.len() - nb);
        let params = ModelParams::from_parts(header.arch, header.kind, groups, running_mean, running_var)?;
        let layout_ok = params
            .param_specs()
            .iter()
            .zip(&header.tensors)
            .all(|(s, t)| s.name == t.name && s.shape == t.shape);
        if !layout_ok {
            return Err(corrupt("tensor names or shapes disagree with the architecture"));
        }
        Ok(Self { params, train_config: header.train_config, split: header.split, final_metrics: header.final_metrics })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_bytes()?).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = fs::read(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

pub fn save_model(params: &ModelParams, path: &Path) -> Result<(), ModelError> {
    Checkpoint::new(params.clone()).save(path)
}

/// Loads parameters, optionally insisting on a specific architecture.
pub fn load_model(path: &Path, expected: Option<&ArchConfig>) -> Result<ModelParams, ModelError> {
    let ckpt = Checkpoint::load(path)?;
    if let Some(arch) = expected {
        if *arch != ckpt.params.arch {
            return Err(ModelError::ArchMismatch(format!("expected {arch:?}, found {:?}", ckpt.params.arch)));
        }
    }
    Ok(ckpt.params)
}
