use std::path::PathBuf;

use serde::Serialize;

use pulseforge::latent::{distance_correlation, mse, snr_db, EvalReport, COR_BATCHES, COR_BATCH_SIZE};

use super::{check_profile_len, encode_means, load_checkpoint};
use crate::output::{dataset_rows, ensure_dir, load_dataset, num, sidecar, write_json, Csv};
use crate::{CliError, EvalArgs};

/// MSE and SNR of `reconstructions`, and the distance correlation between
/// `originals` and `codes` over 50 seeded batches of 128.
pub fn eval_report(
    originals: &[Vec<f64>],
    reconstructions: &[Vec<f64>],
    codes: &[Vec<f64>],
    seed: u64,
) -> Result<EvalReport, CliError> {
    let cor = distance_correlation(originals, codes, COR_BATCHES, COR_BATCH_SIZE, seed)?;
    Ok(EvalReport {
        mse: mse(originals, reconstructions)?,
        snr_db: snr_db(originals, reconstructions)?,
        cor: cor.mean,
        cor_per_batch: cor.per_batch,
        n_samples: originals.len(),
    })
}

#[derive(Serialize)]
struct EvalConfig {
    command: &'static str,
    data: PathBuf,
    model: PathBuf,
    seed: u64,
    cor_batches: usize,
    cor_batch_size: usize,
}

pub fn run(a: &EvalArgs) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&a.model)?;
    let ds = load_dataset(&a.data)?;
    let split = ckpt
        .split
        .as_ref()
        .ok_or_else(|| CliError::Artifact(format!("{}: no held-out split recorded", a.model.display())))?;
    if split.dataset_count != ds.len() {
        return Err(CliError::Artifact(format!(
            "model was trained on {} profiles, dataset has {}",
            split.dataset_count,
            ds.len()
        )));
    }
    if split.dataset_seed.is_some_and(|s| s != ds.manifest.master_seed) {
        return Err(CliError::Artifact("dataset seed differs from the one used for training".into()));
    }
    if split.split.test.is_empty() || split.split.test.iter().any(|&i| i >= ds.len()) {
        return Err(CliError::Artifact("held-out split is empty or out of range".into()));
    }
    check_profile_len(&ckpt.params, ds.profile_len())?;

    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_json(
        &sidecar(&a.out, "config.json"),
        &EvalConfig {
            command: "eval",
            data: a.data.clone(),
            model: a.model.clone(),
            seed: a.seed,
            cor_batches: COR_BATCHES,
            cor_batch_size: COR_BATCH_SIZE,
        },
    )?;

    let rows = dataset_rows(&ds);
    let test: Vec<Vec<f64>> = split.split.test.iter().map(|&i| rows[i].clone()).collect();
    let rec = ckpt.params.reconstruct(&test)?;
    let codes = encode_means(&ckpt.params, &test)?;
    let report = eval_report(&test, &rec, &codes, a.seed)?;
    write_json(&a.out, &report)?;

    let mut csv = Csv::create(&sidecar(&a.out, "csv"), &["metric", "value"])?;
    csv.line(&format!("mse,{}", num(report.mse)))?;
    csv.line(&format!("snr_db,{}", num(report.snr_db)))?;
    csv.line(&format!("cor,{}", num(report.cor)))?;
    csv.line(&format!("n_samples,{}", report.n_samples))?;
    csv.finish()?;

    println!(
        "test set ({} profiles): mse {:.6e}, snr {:.3} dB, cor {:.4}",
        report.n_samples, report.mse, report.snr_db, report.cor
    );
    Ok(())
}
