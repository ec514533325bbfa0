use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{density::quantile_on, EmissionDensity};

pub const DEFAULT_PARTICLES: usize = 200_000;
pub const HISTOGRAM_BINS: usize = 200;

/// How the uniform variates fed to the inverse CDF are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UniformScheme {
    /// One uniform per stratum `[i/n, (i+1)/n)`, returned in shuffled order.
    Stratified,
    Iid,
}

/// Inverse-transform samples with stratified uniforms.
pub fn sample_emission_times(density: &EmissionDensity, n: usize, seed: u64) -> Vec<f64> {
    sample_emission_times_with(density, n, seed, UniformScheme::Stratified)
}

pub fn sample_emission_times_with(density: &EmissionDensity, n: usize, seed: u64, scheme: UniformScheme) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = match scheme {
        UniformScheme::Iid => (0..n).map(|_| rng.random::<f64>()).collect(),
        UniformScheme::Stratified => (0..n).map(|i| (i as f64 + rng.random::<f64>()) / n as f64).collect(),
    };
    if scheme == UniformScheme::Stratified {
        u.shuffle(&mut rng);
    }
    let (t0, dt) = (density.grid.t_min, density.grid.delta_t);
    u.iter().map(|&u| quantile_on(&density.cdf, t0, dt, u).0).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Equal-width histogram over `[t_min, t_max]`; values outside land in the end bins.
pub fn histogram(times: &[f64], t_min: f64, t_max: f64, bins: usize) -> Histogram {
    let width = (t_max - t_min) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &t in times {
        let b = ((t - t_min) / width).floor();
        let b = if b < 0.0 { 0 } else { (b as usize).min(bins - 1) };
        counts[b] += 1;
    }
    let edges = (0..=bins).map(|b| t_min + b as f64 * width).collect();
    Histogram { edges, counts }
}

/// Probability mass the density assigns to each histogram bin.
pub fn bin_masses(density: &EmissionDensity, hist: &Histogram) -> Vec<f64> {
    hist.edges.windows(2).map(|e| density.cdf_at(e[1]) - density.cdf_at(e[0])).collect()
}

/// L1 distance between the normalized histogram of `times` and the density.
pub fn histogram_l1(density: &EmissionDensity, times: &[f64], bins: usize) -> f64 {
    let hist = histogram(times, density.grid.t_min, density.grid.t_max(), bins);
    let n = times.len() as f64;
    bin_masses(density, &hist)
        .iter()
        .zip(&hist.counts)
        .map(|(p, &c)| (c as f64 / n - p).abs())
        .sum()
}

/// Kolmogorov–Smirnov statistic of `times` against the density's CDF.
pub fn ks_statistic(density: &EmissionDensity, times: &[f64]) -> f64 {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let f = density.cdf_at(t);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 5% critical value of the one-sample KS statistic.
pub fn ks_critical_5pct(n: usize) -> f64 {
    1.36 / (n as f64).sqrt()
}

/// One time per line in seconds, scientific notation.
pub fn write_emission_times(path: &Path, times: &[f64]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for t in times {
        writeln!(w, "{t:.9e}")?;
    }
    w.flush()
}

/// Histogram CSV with the density's bin mass alongside the sample fraction.
pub fn write_histogram_csv(path: &Path, density: &EmissionDensity, times: &[f64], bins: usize) -> std::io::Result<()> {
    let hist = histogram(times, density.grid.t_min, density.grid.t_max(), bins);
    let masses = bin_masses(density, &hist);
    let n = times.len().max(1) as f64;
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "bin_start_s,bin_end_s,count,fraction,pdf_mass")?;
    for b in 0..bins {
        writeln!(
            w,
            "{:.9e},{:.9e},{},{:.9e},{:.9e}",
            hist.edges[b],
            hist.edges[b + 1],
            hist.counts[b],
            hist.counts[b] as f64 / n,
            masses[b]
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulsegen::TimeGrid;
    use crate::transport::normalize_to_density;

    fn uniform() -> EmissionDensity {
        let g = TimeGrid::spanning(512, 0.0, 40e-12).unwrap();
        normalize_to_density(&vec![1.0; 512], &g).unwrap()
    }

    #[test]
    fn spike_samples_stay_on_spike() {
        let g = TimeGrid::spanning(101, 0.0, 100.0).unwrap();
        let mut v = vec![0.0; 101];
        v[40] = 1.0;
        let d = normalize_to_density(&v, &g).unwrap();
        for t in sample_emission_times(&d, 1000, 3) {
            assert!((t - 40.0).abs() <= 1.0);
        }
    }

    #[test]
    fn uniform_passes_ks_for_both_schemes() {
        let d = uniform();
        let n = 100_000;
        for scheme in [UniformScheme::Iid, UniformScheme::Stratified] {
            let t = sample_emission_times_with(&d, n, 17, scheme);
            assert!(ks_statistic(&d, &t) < 1.5 * ks_critical_5pct(n), "{scheme:?}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let d = uniform();
        assert_eq!(sample_emission_times(&d, 500, 9), sample_emission_times(&d, 500, 9));
        assert_ne!(sample_emission_times(&d, 500, 9), sample_emission_times(&d, 500, 10));
    }

    #[test]
    fn stratified_histogram_is_tight() {
        let d = uniform();
        let t = sample_emission_times(&d, 200_000, 1);
        assert!(histogram_l1(&d, &t, HISTOGRAM_BINS) < 0.005);
    }

    #[test]
    fn histogram_counts_everything() {
        let h = histogram(&[-1.0, 0.0, 0.5, 0.99, 1.0, 2.0], 0.0, 1.0, 4);
        assert_eq!(h.counts, vec![2, 0, 1, 3]);
        assert_eq!(h.total(), 6);
    }
}
