use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use pulseforge::models::{train, ArchConfig, Checkpoint, ModelKind, SplitRecord, TrainConfig};

use crate::output::{dataset_rows, ensure_dir, load_dataset, sidecar, write_json};
use crate::{ArchPreset, CliError, ModelChoice, TrainArgs};

/// Sidecar written next to the checkpoint; `export-plots` reads `data` from it.
#[derive(Debug, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub command: String,
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    pub arch: ArchConfig,
    pub kind: ModelKind,
    pub train: TrainConfig,
}

pub fn resolve_arch(a: &TrainArgs, input_len: usize) -> Result<ArchConfig, CliError> {
    let mut arch = match a.arch {
        ArchPreset::Default => ArchConfig { latent_dim: a.latent_dim, ..ArchConfig::default() },
        ArchPreset::Desk => ArchConfig::desk(a.latent_dim),
    };
    arch.input_len = input_len;
    if let Some(ch) = &a.channels {
        if ch.len() != arch.channels.len() {
            return Err(CliError::Usage(format!(
                "--channels needs {} stages, got {}",
                arch.channels.len(),
                ch.len()
            )));
        }
        arch.channels = ch.clone();
    }
    arch.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(arch)
}

pub fn run(a: &TrainArgs) -> Result<(), CliError> {
    let kind = match a.model {
        ModelChoice::Wae => ModelKind::Wae,
        ModelChoice::Bvae if a.beta >= 0.0 && a.beta.is_finite() => ModelKind::BetaVae { beta: a.beta },
        ModelChoice::Bvae => return Err(CliError::Usage(format!("--beta must be non-negative, got {}", a.beta))),
    };
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        lambda: a.lambda,
        train_fraction: a.train_fraction,
        seed: a.seed,
        ..TrainConfig::default()
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let ds = load_dataset(&a.data)?;
    let arch = resolve_arch(a, ds.profile_len())?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_json(
        &sidecar(&a.out, "config.json"),
        &TrainRunConfig {
            command: "train".into(),
            data: a.data.clone(),
            checkpoint: a.out.clone(),
            arch: arch.clone(),
            kind,
            train: config.clone(),
        },
    )?;

    let rows = dataset_rows(&ds);
    let outcome = train(&rows, arch, kind, &config)?;

    let mut ckpt = Checkpoint::new(outcome.params);
    ckpt.train_config = Some(config);
    ckpt.split = Some(SplitRecord {
        dataset_count: ds.len(),
        dataset_seed: Some(ds.manifest.master_seed),
        split: outcome.split,
    });
    if let Some(last) = outcome.history.epochs.last() {
        ckpt.final_metrics.insert("train_loss".into(), last.train_loss);
        ckpt.final_metrics.insert("train_reconstruction".into(), last.train_reconstruction);
        ckpt.final_metrics.insert("train_regularizer".into(), last.train_regularizer);
        if let Some(v) = last.val_loss {
            ckpt.final_metrics.insert("val_loss".into(), v);
        }
        if let Some(v) = last.val_reconstruction {
            ckpt.final_metrics.insert("val_reconstruction".into(), v);
        }
    }
    ckpt.save(&a.out)?;
    let hist = sidecar(&a.out, "history.csv");
    outcome.history.write_csv(&hist).map_err(|e| CliError::io(&hist, e))?;

    match outcome.history.epochs.last() {
        Some(r) => println!(
            "trained {} epochs; final train loss {:.6e}, validation reconstruction {}",
            outcome.history.len(),
            r.train_loss,
            r.val_reconstruction.map_or("n/a".to_string(), |v| format!("{v:.6e}"))
        ),
        None => println!("wrote initialized model (0 epochs)"),
    }
    Ok(())
}
