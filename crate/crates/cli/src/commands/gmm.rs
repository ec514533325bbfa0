use std::path::Path;

use serde::{Deserialize, Serialize};

use pulseforge::latent::{gmm_fit_em, nearest_canonical_shape, normalized_pairwise_w2, GmmModel};
use pulseforge::transport::Decoder;

use super::{check_profile_len, encode_means, load_checkpoint};
use crate::output::{dataset_rows, ensure_dir, load_dataset, num, write_json, write_rows, Csv};
use crate::{CliError, GmmArgs};

pub const GMM_FILE: &str = "gmm.json";
pub const W2_FILE: &str = "w2_matrix.csv";
pub const MEANS_FILE: &str = "decoded_means.csv";
pub const SHAPES_FILE: &str = "component_shapes.csv";

/// Mixture parameters plus the fit trace; `sample --gmm` reads the flattened model fields.
#[derive(Debug, Serialize, Deserialize)]
pub struct GmmFile {
    #[serde(flatten)]
    pub model: GmmModel,
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    pub reinitialized: usize,
    pub seed: u64,
}

#[derive(Serialize)]
struct GmmConfig<'a> {
    command: &'static str,
    model: &'a Path,
    data: &'a Path,
    components: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
}

pub fn run(a: &GmmArgs) -> Result<(), CliError> {
    if a.components == 0 {
        return Err(CliError::Usage("--components must be at least 1".into()));
    }
    let ckpt = load_checkpoint(&a.model)?;
    let params = &ckpt.params;
    let ds = load_dataset(&a.data)?;
    check_profile_len(params, ds.profile_len())?;
    if a.components > ds.len() {
        return Err(CliError::Usage(format!("{} components for {} profiles", a.components, ds.len())));
    }
    ensure_dir(&a.out)?;
    write_json(
        &a.out.join("gmm.config.json"),
        &GmmConfig {
            command: "gmm",
            model: &a.model,
            data: &a.data,
            components: a.components,
            seed: a.seed,
            max_iter: a.max_iter,
            tol: a.tol,
        },
    )?;

    // The mixture describes the whole dataset, train and test together.
    let codes = encode_means(params, &dataset_rows(&ds))?;
    let fit = gmm_fit_em(&codes, a.components, a.seed, a.max_iter, a.tol)?;
    write_json(
        &a.out.join(GMM_FILE),
        &GmmFile {
            model: fit.model.clone(),
            log_likelihood: fit.log_likelihood.clone(),
            converged: fit.converged,
            reinitialized: fit.reinitialized,
            seed: a.seed,
        },
    )?;

    let k = a.components;
    let w2 = if k >= 2 { Some(normalized_pairwise_w2(&fit.model)?) } else { None };
    if let Some(m) = &w2 {
        write_rows(&a.out.join(W2_FILE), m)?;
    }
    let decoded = params.decode(&fit.model.means)?;
    write_rows(&a.out.join(MEANS_FILE), &decoded)?;

    let shapes = nearest_canonical_shape(&decoded, &params.output_grid())?;
    let mut csv = Csv::create(
        &a.out.join(SHAPES_FILE),
        &["component", "weight", "label", "family", "w2_to_canonical_s", "mean_normalized_w2"],
    )?;
    for (c, (env, dist)) in shapes.iter().enumerate() {
        let row_mean = w2.as_ref().map_or(0.0, |m| m[c].iter().sum::<f64>() / (k - 1) as f64);
        csv.line(&format!(
            "{c},{},{},{},{},{}",
            num(fit.model.weights[c]),
            env.label(),
            env.family(),
            num(*dist),
            num(row_mean)
        ))?;
    }
    csv.finish()?;

    let ll = fit.log_likelihood.last().copied().unwrap_or(f64::NAN);
    println!(
        "fitted {k} components on {} codes in {} iterations (converged: {}), mean log-likelihood {ll:.6}",
        codes.len(),
        fit.log_likelihood.len().saturating_sub(1),
        fit.converged
    );
    for (c, (env, _)) in shapes.iter().enumerate() {
        println!("  component {c}: weight {:.4}, nearest shape {}", fit.model.weights[c], env.label());
    }
    Ok(())
}
