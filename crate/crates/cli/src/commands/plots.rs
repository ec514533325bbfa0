use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use pulseforge::latent::{energy_correlation, pca_fit, pca_project};
use pulseforge::pulsegen::Envelope;
use pulseforge::transport::{linear_interpolate, Decoder};

use super::train::TrainRunConfig;
use super::{check_profile_len, encode_means, load_checkpoint};
use crate::output::{
    dataset_rows, ensure_dir, line_svg, load_dataset, num, scatter_svg, sidecar, write_json, write_profiles_long, Csv,
};
use crate::{CliError, ExportArgs};

const OVERLAY_SAMPLES: usize = 8;
const FILMSTRIP_FRAMES: usize = 10;

/// The first `*.pfwm` checkpoint in `run`, by file name.
fn find_checkpoint(run: &Path) -> Result<PathBuf, CliError> {
    let entries = fs::read_dir(run).map_err(|e| CliError::Artifact(format!("{}: {e}", run.display())))?;
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pfwm"))
        .collect();
    found.sort();
    found.into_iter().next().ok_or_else(|| CliError::Artifact(format!("{}: no checkpoint (*.pfwm)", run.display())))
}

fn resolve_data(a: &ExportArgs, ckpt_path: &Path) -> Result<PathBuf, CliError> {
    if let Some(d) = &a.data {
        return Ok(d.clone());
    }
    let cfg_path = sidecar(ckpt_path, "config.json");
    let text = fs::read_to_string(&cfg_path)
        .map_err(|e| CliError::Artifact(format!("{}: {e}; pass --data", cfg_path.display())))?;
    let cfg: TrainRunConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Artifact(format!("{}: {e}", cfg_path.display())))?;
    Ok(cfg.data)
}

#[derive(Serialize)]
struct ExportConfig<'a> {
    command: &'static str,
    run: &'a Path,
    checkpoint: &'a Path,
    data: &'a Path,
    overlay_samples: usize,
    filmstrip_frames: usize,
}

pub fn run(a: &ExportArgs) -> Result<(), CliError> {
    let ckpt_path = find_checkpoint(&a.run)?;
    let ckpt = load_checkpoint(&ckpt_path)?;
    let data = resolve_data(a, &ckpt_path)?;
    let ds = load_dataset(&data)?;
    let params = &ckpt.params;
    check_profile_len(params, ds.profile_len())?;
    if let Some(s) = &ckpt.split {
        if s.dataset_count != ds.len() {
            return Err(CliError::Artifact(format!(
                "checkpoint was trained on {} profiles, dataset has {}",
                s.dataset_count,
                ds.len()
            )));
        }
    }
    ensure_dir(&a.out)?;
    write_json(
        &a.out.join("export.config.json"),
        &ExportConfig {
            command: "export-plots",
            run: &a.run,
            checkpoint: &ckpt_path,
            data: &data,
            overlay_samples: OVERLAY_SAMPLES,
            filmstrip_frames: FILMSTRIP_FRAMES,
        },
    )?;

    let rows = dataset_rows(&ds);
    let codes = encode_means(params, &rows)?;
    let energy = ds.normalized_energies();
    let envelopes: Vec<Envelope> = ds.manifest.records.iter().map(|r| r.spec.envelope).collect();

    // PCA scatter coloured by energy.
    let pca = pca_fit(&codes)?;
    let k = pca.dim().min(10);
    let coords = pca_project(&pca, &codes, k)?;
    let mut csv = Csv::create(&a.out.join("pca_scatter.csv"), &["pc1", "pc2", "energy", "family"])?;
    for (i, c) in coords.iter().enumerate() {
        let pc2 = c.get(1).copied().unwrap_or(0.0);
        csv.line(&format!("{},{},{},{}", num(c[0]), num(pc2), num(energy[i]), envelopes[i].family()))?;
    }
    csv.finish()?;
    let pts: Vec<(f64, f64)> = coords.iter().map(|c| (c[0], c.get(1).copied().unwrap_or(0.0))).collect();
    scatter_svg(&a.out.join("pca_scatter.svg"), "latent PCA (shade: energy)", &pts, &energy)?;

    let r = energy_correlation(&coords, &energy).unwrap_or_else(|_| vec![f64::NAN; k]);
    let mut csv = Csv::create(&a.out.join("energy_correlation.csv"), &["component", "explained_variance", "pearson_r"])?;
    for (c, rc) in r.iter().enumerate() {
        csv.line(&format!("{},{},{}", c + 1, num(pca.variances[c]), num(*rc)))?;
    }
    csv.finish()?;

    // Gaussian family ordered by super-Gaussian order.
    let mut gauss: Vec<(u8, usize)> = envelopes
        .iter()
        .enumerate()
        .filter_map(|(i, e)| match e {
            Envelope::Gaussian { order } => Some((*order, i)),
            _ => None,
        })
        .collect();
    gauss.sort();
    let mut csv = Csv::create(&a.out.join("gaussian_trajectory.csv"), &["p_g", "index", "pc1", "pc2", "energy"])?;
    let mut centroids: Vec<(u8, f64, f64, usize)> = Vec::new();
    for &(p, i) in &gauss {
        csv.line(&format!("{p},{i},{},{},{}", num(pts[i].0), num(pts[i].1), num(energy[i])))?;
        match centroids.last_mut() {
            Some(c) if c.0 == p => {
                c.1 += pts[i].0;
                c.2 += pts[i].1;
                c.3 += 1;
            }
            _ => centroids.push((p, pts[i].0, pts[i].1, 1)),
        }
    }
    csv.finish()?;
    let path: Vec<(f64, f64)> = centroids.iter().map(|c| (c.1 / c.3 as f64, c.2 / c.3 as f64)).collect();
    line_svg(&a.out.join("gaussian_trajectory.svg"), "Gaussian-family centroids by order", &[path])?;

    // Reconstruction overlay on held-out profiles when a split is recorded.
    let picks: Vec<usize> = match &ckpt.split {
        Some(s) => s.split.test.iter().copied().take(OVERLAY_SAMPLES).collect(),
        None => (0..ds.len().min(OVERLAY_SAMPLES)).collect(),
    };
    let originals: Vec<Vec<f64>> = picks.iter().map(|&i| rows[i].clone()).collect();
    let recon = params.reconstruct(&originals)?;
    let times = params.output_grid().times();
    let mut csv = Csv::create(&a.out.join("reconstruction_overlay.csv"), &["sample", "index", "t_s", "original", "reconstruction"])?;
    for (s, (&i, (x, y))) in picks.iter().zip(originals.iter().zip(&recon)).enumerate() {
        for ((t, u), v) in times.iter().zip(x).zip(y) {
            csv.line(&format!("{s},{i},{},{},{}", num(*t), num(*u), num(*v)))?;
        }
    }
    csv.finish()?;
    if let (Some(x), Some(y)) = (originals.first(), recon.first()) {
        let series = [
            times.iter().copied().zip(x.iter().copied()).collect(),
            times.iter().copied().zip(y.iter().copied()).collect(),
        ];
        line_svg(&a.out.join("reconstruction_overlay.svg"), "original vs reconstruction", &series)?;
    }

    // Filmstrip from a Gaussian (p = 1) profile to a flattop one.
    let first = |pred: &dyn Fn(&Envelope) -> bool| envelopes.iter().position(pred);
    let start = first(&|e| *e == Envelope::Gaussian { order: 1 }).unwrap_or(0);
    let end = first(&|e| *e == Envelope::Flattop).unwrap_or(ds.len() - 1);
    let film = linear_interpolate(&codes[start], &codes[end], FILMSTRIP_FRAMES)?;
    let frames = params.decode(&film.waypoints)?;
    write_profiles_long(&a.out.join("filmstrip.csv"), "frame", &frames, &times)?;
    let series: Vec<Vec<(f64, f64)>> =
        frames.iter().map(|f| times.iter().copied().zip(f.iter().copied()).collect()).collect();
    line_svg(&a.out.join("filmstrip.svg"), "linear latent interpolation", &series)?;

    println!("wrote plot data for {} profiles to {}", ds.len(), a.out.display());
    Ok(())
}
