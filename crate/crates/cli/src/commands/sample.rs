use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use pulseforge::latent::GmmModel;
use pulseforge::pulsegen::derive_seed;
use pulseforge::transport::{
    histogram_l1, ks_critical_5pct, ks_statistic, normalize_to_density, sample_emission_times, write_emission_times,
    write_histogram_csv, Decoder, HISTOGRAM_BINS,
};

use super::load_checkpoint;
use crate::output::{ensure_dir, write_json, write_rows};
use crate::{CliError, SampleArgs};

pub fn load_gmm(path: &Path, latent_dim: usize) -> Result<GmmModel, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let corrupt = |m: String| CliError::Artifact(format!("{}: {m}", path.display()));
    let gmm: GmmModel = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    gmm.validate().map_err(|e| corrupt(e.to_string()))?;
    if gmm.dim() != latent_dim {
        return Err(corrupt(format!("mixture is {}-dimensional, model latent is {latent_dim}", gmm.dim())));
    }
    Ok(gmm)
}

#[derive(Serialize)]
struct PulseSummary {
    index: usize,
    mean_time_s: f64,
    histogram_l1: f64,
    ks: f64,
    ks_critical_5pct: f64,
}

#[derive(Serialize)]
struct SampleConfig<'a> {
    command: &'static str,
    model: &'a Path,
    gmm: Option<&'a Path>,
    count: usize,
    particles: usize,
    seed: u64,
    bins: usize,
}

pub fn run(a: &SampleArgs) -> Result<(), CliError> {
    if a.count == 0 || a.particles == 0 {
        return Err(CliError::Usage("--count and --particles must be positive".into()));
    }
    let ckpt = load_checkpoint(&a.model)?;
    let params = &ckpt.params;
    let d = params.latent_dim();
    let codes = match &a.gmm {
        Some(p) => load_gmm(p, d)?.sample(a.count, a.seed)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            (0..a.count).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect()
        }
    };
    ensure_dir(&a.out)?;
    write_json(
        &a.out.join("sample.config.json"),
        &SampleConfig {
            command: "sample",
            model: &a.model,
            gmm: a.gmm.as_deref(),
            count: a.count,
            particles: a.particles,
            seed: a.seed,
            bins: HISTOGRAM_BINS,
        },
    )?;
    write_rows(&a.out.join("latents.csv"), &codes)?;
    let decoded = params.decode(&codes)?;
    write_rows(&a.out.join("decoded.csv"), &decoded)?;

    let grid = params.output_grid();
    let mut summary = Vec::with_capacity(a.count);
    for (i, pulse) in decoded.iter().enumerate() {
        let density = normalize_to_density(pulse, &grid)?;
        let times = sample_emission_times(&density, a.particles, derive_seed(a.seed, 1 + i as u64, 0));
        let tp = a.out.join(format!("emission_times_{i:03}.txt"));
        write_emission_times(&tp, &times).map_err(|e| CliError::io(&tp, e))?;
        let hp = a.out.join(format!("histogram_{i:03}.csv"));
        write_histogram_csv(&hp, &density, &times, HISTOGRAM_BINS).map_err(|e| CliError::io(&hp, e))?;
        let s = PulseSummary {
            index: i,
            mean_time_s: times.iter().sum::<f64>() / times.len() as f64,
            histogram_l1: histogram_l1(&density, &times, HISTOGRAM_BINS),
            ks: ks_statistic(&density, &times),
            ks_critical_5pct: ks_critical_5pct(times.len()),
        };
        println!("pulse {i}: histogram L1 {:.4}, KS {:.5} (5% critical {:.5})", s.histogram_l1, s.ks, s.ks_critical_5pct);
        summary.push(s);
    }
    write_json(&a.out.join("summary.json"), &summary)
}
