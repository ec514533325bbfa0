use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use pulseforge::models::ModelParams;
use pulseforge::transport::{
    endpoint_distance, evaluate_path, linear_interpolate, optimize_geodesic, Decoder, GeodesicOptions, GeodesicPath,
    DEFAULT_QUADRATURE,
};

use super::{check_profile_len, encode_means, load_checkpoint};
use crate::output::{ensure_dir, load_dataset, num, write_json, write_profiles_long, Csv};
use crate::{CliError, InterpolateArgs};

pub const SUMMARY_FILE: &str = "summary.json";

/// Parses a latent code written as numbers separated by commas, whitespace or
/// JSON brackets.
pub fn parse_code(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c == '[' || c == ']' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

fn read_code(path: &Path, dim: usize) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let z = parse_code(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if z.len() != dim || z.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Usage(format!(
            "{}: expected {dim} finite values, found {}",
            path.display(),
            z.len()
        )));
    }
    Ok(z)
}

fn endpoint(
    params: &ModelParams,
    a: &InterpolateArgs,
    index: Option<usize>,
    file: Option<&PathBuf>,
) -> Result<Vec<f64>, CliError> {
    if let Some(f) = file {
        return read_code(f, params.latent_dim());
    }
    let i = index.expect("clap enforces one endpoint source");
    let data = a.data.as_ref().ok_or_else(|| CliError::Usage("--from/--to indices need --data".into()))?;
    let ds = load_dataset(data)?;
    check_profile_len(params, ds.profile_len())?;
    if i >= ds.len() {
        return Err(CliError::Usage(format!("index {i} out of range for {} profiles", ds.len())));
    }
    let row: Vec<f64> = ds.profile(i).iter().map(|&v| v as f64).collect();
    Ok(encode_means(params, &[row])?.remove(0))
}

#[derive(Serialize)]
struct PathSummary {
    length_s: Option<f64>,
    ratio: Option<f64>,
}

#[derive(Serialize)]
struct Summary {
    waypoints: usize,
    endpoint_distance_s: f64,
    linear: PathSummary,
    optimized: Option<PathSummary>,
}

#[derive(Serialize)]
struct InterpolateConfig<'a> {
    command: &'static str,
    model: &'a Path,
    data: Option<&'a Path>,
    from: Option<usize>,
    to: Option<usize>,
    z_from: Option<&'a Path>,
    z_to: Option<&'a Path>,
    waypoints: usize,
    optimize: bool,
    steps: usize,
    lr: f64,
    quadrature: usize,
}

fn export(dir: &Path, name: &str, path: &GeodesicPath, params: &ModelParams) -> Result<PathSummary, CliError> {
    let d = params.latent_dim();
    let mut header = vec!["waypoint".to_string()];
    header.extend((0..d).map(|k| format!("z{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::create(&dir.join(format!("{name}_waypoints.csv")), &header)?;
    for (i, z) in path.waypoints.iter().enumerate() {
        let cells: Vec<String> = std::iter::once(i.to_string()).chain(z.iter().map(|v| num(*v))).collect();
        csv.line(&cells.join(","))?;
    }
    csv.finish()?;
    let decoded = params.decode(&path.waypoints)?;
    write_profiles_long(&dir.join(format!("{name}_decoded.csv")), "waypoint", &decoded, &params.output_grid().times())?;
    Ok(PathSummary { length_s: path.length, ratio: path.ratio })
}

pub fn run(a: &InterpolateArgs) -> Result<(), CliError> {
    if a.waypoints < 2 {
        return Err(CliError::Usage("--waypoints must be at least 2".into()));
    }
    if a.optimize && a.waypoints < 3 {
        return Err(CliError::Usage("--optimize needs at least 3 waypoints".into()));
    }
    if a.optimize && !(a.lr > 0.0 && a.lr.is_finite()) {
        return Err(CliError::Usage(format!("--lr must be positive, got {}", a.lr)));
    }
    let ckpt = load_checkpoint(&a.model)?;
    let params = &ckpt.params;
    let z_a = endpoint(params, a, a.from, a.z_from.as_ref())?;
    let z_b = endpoint(params, a, a.to, a.z_to.as_ref())?;

    ensure_dir(&a.out)?;
    write_json(
        &a.out.join("interpolate.config.json"),
        &InterpolateConfig {
            command: "interpolate",
            model: &a.model,
            data: a.data.as_deref(),
            from: a.from,
            to: a.to,
            z_from: a.z_from.as_deref(),
            z_to: a.z_to.as_deref(),
            waypoints: a.waypoints,
            optimize: a.optimize,
            steps: a.steps,
            lr: a.lr,
            quadrature: DEFAULT_QUADRATURE,
        },
    )?;

    let linear = evaluate_path(linear_interpolate(&z_a, &z_b, a.waypoints)?, params, DEFAULT_QUADRATURE)?;
    let w = endpoint_distance(&linear, params, DEFAULT_QUADRATURE)?;
    let linear_summary = export(&a.out, "linear", &linear, params)?;
    let optimized = if a.optimize {
        let options = GeodesicOptions { n_waypoints: a.waypoints, steps: a.steps, lr: a.lr, n_quad: DEFAULT_QUADRATURE };
        let path = optimize_geodesic(&z_a, &z_b, params, &options)?;
        Some(export(&a.out, "optimized", &path, params)?)
    } else {
        None
    };

    let fmt = |s: &PathSummary| {
        format!(
            "L = {}, rho = {}",
            s.length_s.map_or("n/a".into(), |v| format!("{v:.6e} s")),
            s.ratio.map_or("n/a".into(), |v| format!("{v:.6}"))
        )
    };
    println!("linear: {}", fmt(&linear_summary));
    if let Some(o) = &optimized {
        println!("optimized: {}", fmt(o));
    }
    write_json(
        &a.out.join(SUMMARY_FILE),
        &Summary { waypoints: a.waypoints, endpoint_distance_s: w, linear: linear_summary, optimized },
    )
}
