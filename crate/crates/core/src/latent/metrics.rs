use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LatentError;

/// Per-sample SNR used when a reconstruction is exact.
pub const SNR_CAP_DB: f64 = 300.0;
pub const COR_BATCHES: usize = 50;
pub const COR_BATCH_SIZE: usize = 128;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse: f64,
    pub snr_db: f64,
    pub cor: f64,
    pub cor_per_batch: Vec<f64>,
    pub n_samples: usize,
}

fn check_pairs(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<(), LatentError> {
    if a.is_empty() || a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(LatentError::InvalidArgument("mismatched shapes".into()));
    }
    Ok(())
}

/// Mean squared error over all elements.
pub fn mse(originals: &[Vec<f64>], reconstructions: &[Vec<f64>]) -> Result<f64, LatentError> {
    check_pairs(originals, reconstructions)?;
    let (mut s, mut n) = (0.0, 0usize);
    for (x, y) in originals.iter().zip(reconstructions) {
        s += x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        n += x.len();
    }
    Ok(s / n as f64)
}

/// Mean over samples of `10 log10(|x|^2 / |x - x_hat|^2)`.
pub fn snr_db(originals: &[Vec<f64>], reconstructions: &[Vec<f64>]) -> Result<f64, LatentError> {
    check_pairs(originals, reconstructions)?;
    let mut total = 0.0;
    for (i, (x, y)) in originals.iter().zip(reconstructions).enumerate() {
        let signal: f64 = x.iter().map(|v| v * v).sum();
        if !(signal > 0.0) {
            return Err(LatentError::InvalidArgument(format!("sample {i} has zero norm")));
        }
        let noise: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        let db = if noise > 0.0 { 10.0 * (signal / noise).log10() } else { f64::INFINITY };
        if db > SNR_CAP_DB {
            log::info!("sample {i}: SNR capped at {SNR_CAP_DB} dB");
        }
        total += db.min(SNR_CAP_DB);
    }
    Ok(total / originals.len() as f64)
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if !(saa > 0.0 && sbb > 0.0) {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn pairwise_distances(rows: &[&Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            out.push(rows[i].iter().zip(rows[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceCorrelation {
    pub mean: f64,
    pub per_batch: Vec<f64>,
    pub skipped: usize,
}

/// Pearson correlation between pairwise data-space and latent-space
/// distances, averaged over random batches drawn without replacement.
pub fn distance_correlation(
    data: &[Vec<f64>],
    codes: &[Vec<f64>],
    n_batches: usize,
    batch_size: usize,
    seed: u64,
) -> Result<DistanceCorrelation, LatentError> {
    if data.len() != codes.len() {
        return Err(LatentError::InvalidArgument("data and codes differ in length".into()));
    }
    let m = batch_size.min(data.len());
    if m < 3 {
        return Err(LatentError::Insufficient(format!("batches of {m} samples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_batch = Vec::with_capacity(n_batches);
    let mut skipped = 0;
    for b in 0..n_batches {
        let idx = sample(&mut rng, data.len(), m).into_vec();
        let dx = pairwise_distances(&idx.iter().map(|&i| &data[i]).collect::<Vec<_>>());
        let dz = pairwise_distances(&idx.iter().map(|&i| &codes[i]).collect::<Vec<_>>());
        match pearson(&dx, &dz) {
            Some(r) => per_batch.push(r),
            None => {
                log::warn!("batch {b}: zero-variance distances, skipped");
                skipped += 1;
            }
        }
    }
    if per_batch.is_empty() {
        return Err(LatentError::UndefinedCorrelation("every batch had zero-variance distances".into()));
    }
    let mean = per_batch.iter().sum::<f64>() / per_batch.len() as f64;
    Ok(DistanceCorrelation { mean, per_batch, skipped })
}

/// Pearson r between each coordinate column and the energies.
pub fn energy_correlation(coords: &[Vec<f64>], energies: &[f64]) -> Result<Vec<f64>, LatentError> {
    if coords.len() != energies.len() || coords.is_empty() {
        return Err(LatentError::InvalidArgument("coordinates and energies differ in length".into()));
    }
    let k = coords[0].len();
    (0..k)
        .map(|c| {
            let col: Vec<f64> = coords.iter().map(|r| r[c]).collect();
            pearson(&col, energies)
                .ok_or_else(|| LatentError::UndefinedCorrelation(format!("zero variance in coordinate {c} or energies")))
        })
        .collect()
}
