//! Text outputs: CSV, JSON sidecars and minimal SVG renderings.
//!
//! Numbers are written with Rust's own formatting, which does not depend on
//! the process locale.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pulseforge::pulsegen::Dataset;
use serde::Serialize;

use crate::CliError;

/// `path` with its extension replaced by `ext` (`model.pfwm` -> `model.history.csv`).
pub fn sidecar(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

pub fn num(v: f64) -> String {
    format!("{v:.9e}")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub struct Csv {
    path: PathBuf,
    w: BufWriter<fs::File>,
}

impl Csv {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, CliError> {
        let f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut csv = Self { path: path.to_path_buf(), w: BufWriter::new(f) };
        if !header.is_empty() {
            csv.line(&header.join(","))?;
        }
        Ok(csv)
    }

    pub fn line(&mut self, s: &str) -> Result<(), CliError> {
        writeln!(self.w, "{s}").map_err(|e| CliError::io(&self.path, e))
    }

    pub fn values(&mut self, v: &[f64]) -> Result<(), CliError> {
        self.line(&v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(","))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.w.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// One row of numbers per line, no header.
pub fn write_rows(path: &Path, rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut csv = Csv::create(path, &[])?;
    for r in rows {
        csv.values(r)?;
    }
    csv.finish()
}

/// Long-format profiles: `(label, t_s, intensity)` per sample.
pub fn write_profiles_long(path: &Path, label: &str, rows: &[Vec<f64>], times: &[f64]) -> Result<(), CliError> {
    let mut csv = Csv::create(path, &[label, "t_s", "intensity"])?;
    for (i, r) in rows.iter().enumerate() {
        for (t, v) in times.iter().zip(r) {
            csv.line(&format!("{i},{},{}", num(*t), num(*v)))?;
        }
    }
    csv.finish()
}

pub fn dataset_rows(ds: &Dataset) -> Vec<Vec<f64>> {
    (0..ds.len()).map(|i| ds.profile(i).iter().map(|&v| v as f64).collect()).collect()
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    if !dir.join(pulseforge::pulsegen::MANIFEST_FILE).is_file() {
        return Err(CliError::Artifact(format!("{}: no dataset manifest", dir.display())));
    }
    Ok(Dataset::load(dir)?)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 40.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Self {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = x;
        for &(a, b) in points {
            x = (x.0.min(a), x.1.max(a));
            y = (y.0.min(b), y.1.max(b));
        }
        let widen = |r: (f64, f64)| if r.1 > r.0 { r } else { (r.0 - 0.5, r.0 + 0.5) };
        Self { x: widen(x), y: widen(y) }
    }

    fn px(&self, (a, b): (f64, f64)) -> (f64, f64) {
        let u = M + (a - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * M);
        let v = H - M - (b - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * M);
        (u, v)
    }
}

fn svg_open(title: &str, f: &Frame) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{M}" y="20" font-family="sans-serif" font-size="13">{title}</text>"#);
    let _ = writeln!(
        s,
        r#"<polyline points="{M},{} {M},{} {},{}" fill="none" stroke="black"/>"#,
        M,
        H - M,
        W - M,
        H - M
    );
    let _ = writeln!(
        s,
        r#"<text x="{M}" y="{}" font-family="sans-serif" font-size="10">{:.3e} .. {:.3e}</text>"#,
        H - 10.0,
        f.x.0,
        f.x.1
    );
    let _ = writeln!(
        s,
        r#"<text x="2" y="{}" font-family="sans-serif" font-size="10">{:.3e} .. {:.3e}</text>"#,
        M - 5.0,
        f.y.0,
        f.y.1
    );
    s
}

pub fn line_svg(path: &Path, title: &str, series: &[Vec<(f64, f64)>]) -> Result<(), CliError> {
    let f = Frame::fit(series.iter().flatten());
    let mut s = svg_open(title, &f);
    for (k, pts) in series.iter().enumerate() {
        let coords: Vec<String> = pts
            .iter()
            .map(|&p| {
                let (u, v) = f.px(p);
                format!("{u:.2},{v:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.2"/>"#,
            coords.join(" "),
            COLORS[k % COLORS.len()]
        );
    }
    s.push_str("</svg>\n");
    fs::write(path, s).map_err(|e| CliError::io(path, e))
}

/// Scatter plot shaded by `shade` in [0, 1] (light to dark).
pub fn scatter_svg(path: &Path, title: &str, points: &[(f64, f64)], shade: &[f64]) -> Result<(), CliError> {
    let f = Frame::fit(points.iter());
    let mut s = svg_open(title, &f);
    for (&p, &c) in points.iter().zip(shade) {
        let (u, v) = f.px(p);
        let level = (230.0 * (1.0 - c.clamp(0.0, 1.0))) as u8;
        let _ = writeln!(s, r#"<circle cx="{u:.2}" cy="{v:.2}" r="2" fill="rgb({level},{level},255)"/>"#);
    }
    s.push_str("</svg>\n");
    fs::write(path, s).map_err(|e| CliError::io(path, e))
}
