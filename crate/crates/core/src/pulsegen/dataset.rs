use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    pulse_energy, preprocess, propagate_splitstep, sample_pulse_spec_attempt, synthesize_field, to_intensity,
    FiberProxyParams, FrequencyGrid, IntensityProfile, ProfileTag, PulseError, PulseSpec, TimeGrid,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PROFILES_FILE: &str = "profiles.f32le";
pub const DATASET_FORMAT: &str = "pulseforge-dataset";
pub const DATASET_VERSION: u32 = 1;
/// Attempts per index before generation gives up.
pub const MAX_ATTEMPTS: u32 = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub pair: u64,
    pub tag: ProfileTag,
    pub spec: PulseSpec,
    /// Resampling attempt that produced `spec` (0 when the first draw was valid).
    pub attempt: u32,
    /// Sum of preprocessed samples times the grid step, in seconds.
    pub energy: f64,
    /// Byte offset of the record in the profile blob.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub count: usize,
    pub pairs: usize,
    pub master_seed: u64,
    pub synthesis_grid: FrequencyGrid,
    pub profile_grid: TimeGrid,
    pub fiber: FiberProxyParams,
    pub records: Vec<DatasetRecord>,
}

/// Manifest plus the profile matrix, row-major `[count, n_points]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub profiles: Vec<f32>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.manifest.count
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.count == 0
    }

    pub fn profile_len(&self) -> usize {
        self.manifest.profile_grid.n_points
    }

    pub fn profile(&self, i: usize) -> &[f32] {
        let n = self.profile_len();
        &self.profiles[i * n..(i + 1) * n]
    }

    pub fn energies(&self) -> Vec<f64> {
        self.manifest.records.iter().map(|r| r.energy).collect()
    }

    /// Energies divided by the dataset maximum.
    pub fn normalized_energies(&self) -> Vec<f64> {
        let e = self.energies();
        let max = e.iter().cloned().fold(0.0, f64::max);
        e.iter().map(|v| v / max).collect()
    }

    pub fn load(dir: &Path) -> Result<Self, PulseError> {
        let manifest: DatasetManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)
            .map_err(|e| PulseError::Format(format!("manifest: {e}")))?;
        if manifest.format != DATASET_FORMAT || manifest.version != DATASET_VERSION {
            return Err(PulseError::Format(format!(
                "unsupported dataset {} v{}",
                manifest.format, manifest.version
            )));
        }
        if manifest.records.len() != manifest.count {
            return Err(PulseError::Format("record count does not match manifest".into()));
        }
        let bytes = fs::read(dir.join(PROFILES_FILE))?;
        let expected = manifest.count * manifest.profile_grid.n_points * 4;
        if bytes.len() != expected {
            return Err(PulseError::Format(format!("profile blob has {} bytes, expected {expected}", bytes.len())));
        }
        let profiles = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { manifest, profiles })
    }

    pub fn save(&self, dir: &Path) -> Result<(), PulseError> {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_vec_pretty(&self.manifest).map_err(|e| PulseError::Format(e.to_string()))?;
        fs::write(dir.join(MANIFEST_FILE), json)?;
        let mut w = BufWriter::new(fs::File::create(dir.join(PROFILES_FILE))?);
        for v in &self.profiles {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Input and propagated profiles of one sampled spec.
#[derive(Clone, Debug)]
pub struct PulsePair {
    pub spec: PulseSpec,
    pub attempt: u32,
    pub input: IntensityProfile,
    pub propagated: IntensityProfile,
}

fn simulate(spec: &PulseSpec, grid: &FrequencyGrid, fiber: &FiberProxyParams) -> Result<PulsePair, PulseError> {
    let tgrid = grid.time_grid();
    let out = TimeGrid::profile();
    let field = synthesize_field(spec, grid)?;
    let input = preprocess(&to_intensity(&field), &tgrid, &out)?;
    let propagated = propagate_splitstep(&field, fiber)?;
    let propagated = preprocess(&to_intensity(&propagated), &tgrid, &out)?.with_tag(ProfileTag::Propagated);
    Ok(PulsePair { spec: *spec, attempt: 0, input, propagated })
}

/// Simulates pair `index`, resampling degenerate draws.
pub fn generate_pair(
    master_seed: u64,
    index: u64,
    grid: &FrequencyGrid,
    fiber: &FiberProxyParams,
) -> Result<PulsePair, PulseError> {
    for attempt in 0..MAX_ATTEMPTS {
        let spec = sample_pulse_spec_attempt(master_seed, index, attempt);
        match simulate(&spec, grid, fiber) {
            Ok(pair) => return Ok(PulsePair { attempt, ..pair }),
            Err(e @ (PulseError::Degenerate(_) | PulseError::Divergence { .. })) => {
                log::warn!("pair {index} attempt {attempt}: {e}; resampling");
            }
            Err(e) => return Err(e),
        }
    }
    Err(PulseError::Exhausted { index, attempts: MAX_ATTEMPTS })
}

/// Builds the dataset in memory; output is independent of thread scheduling.
pub fn build_dataset(count_pairs: usize, master_seed: u64, fiber: &FiberProxyParams) -> Result<Dataset, PulseError> {
    if count_pairs == 0 {
        return Err(PulseError::InvalidSpec("count_pairs must be >= 1".into()));
    }
    fiber.validate()?;
    let grid = FrequencyGrid::default();
    let pairs = (0..count_pairs as u64)
        .into_par_iter()
        .map(|i| generate_pair(master_seed, i, &grid, fiber))
        .collect::<Result<Vec<_>, _>>()?;
    let out = TimeGrid::profile();
    let row_bytes = (out.n_points * 4) as u64;
    let mut records = Vec::with_capacity(2 * count_pairs);
    let mut profiles = Vec::with_capacity(2 * count_pairs * out.n_points);
    for (i, pair) in pairs.iter().enumerate() {
        for p in [&pair.input, &pair.propagated] {
            records.push(DatasetRecord {
                pair: i as u64,
                tag: p.tag,
                spec: pair.spec,
                attempt: pair.attempt,
                energy: pulse_energy(p),
                offset: records.len() as u64 * row_bytes,
            });
            profiles.extend(p.values.iter().map(|&v| v as f32));
        }
    }
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        count: records.len(),
        pairs: count_pairs,
        master_seed,
        synthesis_grid: grid,
        profile_grid: out,
        fiber: *fiber,
        records,
    };
    Ok(Dataset { manifest, profiles })
}

/// Generates `2 * count_pairs` profiles and writes them to `out_dir`.
pub fn generate_dataset(
    count_pairs: usize,
    master_seed: u64,
    fiber: &FiberProxyParams,
    out_dir: &Path,
) -> Result<DatasetManifest, PulseError> {
    let ds = build_dataset(count_pairs, master_seed, fiber)?;
    ds.save(out_dir)?;
    Ok(ds.manifest)
}
