use std::sync::Arc;

use crate::diffcore::{AdamState, CustomOp, DiffError, Tape, Tensor, Var};
use crate::pulsegen::TimeGrid;

use super::{
    density::{cumulative_trapezoid, quantile_on},
    normalize_to_density, w2_1d, w2_from_quantiles, TransportError, DEFAULT_QUADRATURE,
};

/// A differentiable map from latent codes to temporal profiles.
pub trait Decoder: Sync {
    fn latent_dim(&self) -> usize;
    fn output_grid(&self) -> TimeGrid;
    /// Records decoding of `codes` (`[n, latent_dim]`) and returns `[n, n_points]`.
    fn decode_on_tape(&self, tape: &mut Tape, codes: Var) -> Result<Var, DiffError>;

    fn decode(&self, codes: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, DiffError> {
        let d = self.latent_dim();
        if codes.iter().any(|c| c.len() != d) {
            return Err(DiffError::Shape(format!("codes must have {d} entries")));
        }
        let mut tape = Tape::new();
        let flat: Vec<f64> = codes.iter().flatten().copied().collect();
        let z = tape.constant(Tensor::new(vec![codes.len(), d], flat)?);
        let out = self.decode_on_tape(&mut tape, z)?;
        let t = tape.value(out);
        Ok((0..codes.len()).map(|i| t.row(i).to_vec()).collect())
    }
}

/// Ordered latent waypoints; the first and last are the fixed endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicPath {
    pub waypoints: Vec<Vec<f64>>,
    pub endpoints_fixed: bool,
    /// Sum of consecutive W2 distances, in the time unit of the decoder grid.
    pub length: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeodesicOptions {
    pub n_waypoints: usize,
    pub steps: usize,
    pub lr: f64,
    pub n_quad: usize,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        Self { n_waypoints: 10, steps: 300, lr: 1e-2, n_quad: DEFAULT_QUADRATURE }
    }
}

pub fn linear_interpolate(z_a: &[f64], z_b: &[f64], n: usize) -> Result<GeodesicPath, TransportError> {
    if n < 2 {
        return Err(TransportError::InvalidArgument(format!("{n} waypoints; at least 2 required")));
    }
    if z_a.len() != z_b.len() {
        return Err(TransportError::InvalidArgument("endpoint dimensions differ".into()));
    }
    let mut waypoints: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let s = i as f64 / (n - 1) as f64;
            z_a.iter().zip(z_b).map(|(a, b)| a + s * (b - a)).collect()
        })
        .collect();
    waypoints[0] = z_a.to_vec();
    waypoints[n - 1] = z_b.to_vec();
    Ok(GeodesicPath { waypoints, endpoints_fixed: true, length: None, ratio: None })
}

/// Midpoint quantiles of clamped, trapezoid-normalized rows: `[n, L] -> [n, M]`.
///
/// The bracketing CDF segment is held fixed in the backward pass, so the
/// gradient is that of the piecewise-linear inverse on the selected segment.
struct QuantileOp {
    dt: f64,
    n_quad: usize,
    /// Per row: bracketing node index of each quantile.
    brackets: Vec<Vec<usize>>,
}

impl QuantileOp {
    fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_quad).map(move |m| (m as f64 + 0.5) / self.n_quad as f64)
    }
}

fn quantile_rows(
    tape: &mut Tape,
    x: Var,
    t_min: f64,
    dt: f64,
    n_quad: usize,
) -> Result<Var, TransportError> {
    let value = tape.value(x);
    let (n, l) = match value.shape() {
        [n, l] => (*n, *l),
        s => return Err(DiffError::Shape(format!("quantile rows expect [n, L], got {s:?}")).into()),
    };
    let mut out = Vec::with_capacity(n * n_quad);
    let mut brackets = Vec::with_capacity(n);
    for i in 0..n {
        let c = cumulative_trapezoid(value.row(i), dt);
        let total = c[l - 1];
        if !(total > 0.0 && total.is_finite()) {
            return Err(TransportError::Path { waypoint: i, reason: "decoded profile has no positive mass".into() });
        }
        let f: Vec<f64> = c.iter().map(|v| v / total).collect();
        let mut row_brackets = Vec::with_capacity(n_quad);
        for m in 0..n_quad {
            let u = (m as f64 + 0.5) / n_quad as f64;
            let (q, j) = quantile_on(&f, t_min, dt, u);
            out.push(q);
            row_brackets.push(j);
        }
        brackets.push(row_brackets);
    }
    let op = QuantileOp { dt, n_quad, brackets };
    let t = Tensor::new(vec![n, n_quad], out)?;
    Ok(tape.custom(&[x], t, Arc::new(op)))
}

impl CustomOp for QuantileOp {
    fn name(&self) -> &str {
        "midpoint_quantiles"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let (n, l) = (x.shape()[0], x.shape()[1]);
        let mut gx = vec![0.0; n * l];
        for i in 0..n {
            let row = x.row(i);
            let c = cumulative_trapezoid(row, self.dt);
            let total = c[l - 1];
            let f: Vec<f64> = c.iter().map(|v| v / total).collect();
            // g[k] = dLoss/dF_k
            let mut g = vec![0.0; l];
            for (m, u) in self.nodes().enumerate() {
                let gq = grad.data()[i * self.n_quad + m];
                if gq == 0.0 {
                    continue;
                }
                let j = self.brackets[i][m];
                let d = f[j] - f[j - 1];
                if d <= 0.0 {
                    continue;
                }
                g[j - 1] += gq * self.dt * (u - f[j]) / (d * d);
                g[j] -= gq * self.dt * (u - f[j - 1]) / (d * d);
            }
            // dF_k/dv_m = dt (w_km - F_k w_Tm) / total, with trapezoid weights w.
            let b: f64 = g.iter().zip(&f).map(|(gk, fk)| gk * fk).sum();
            let mut suffix = 0.0;
            let mut a = vec![0.0; l];
            for m in (0..l).rev() {
                a[m] = if m == 0 { 0.5 * suffix } else { 0.5 * g[m] + suffix };
                suffix += g[m];
            }
            for m in 0..l {
                if row[m] <= 0.0 {
                    continue;
                }
                let w_t = if m == 0 || m == l - 1 { 0.5 } else { 1.0 };
                gx[i * l + m] = self.dt * (a[m] - b * w_t) / total;
            }
        }
        vec![Some(Tensor::new(vec![n, l], gx).expect("gradient shape"))]
    }
}

/// Records the discrete path length of the decoded rows of `profiles` (`[N, L]`).
///
/// Times are measured in units of the grid window so the optimizer sees O(1)
/// values regardless of the physical scale.
pub fn path_length_on_tape(
    tape: &mut Tape,
    profiles: Var,
    grid: &TimeGrid,
    n_quad: usize,
) -> Result<Var, TransportError> {
    let window = grid.t_max() - grid.t_min;
    let q = quantile_rows(tape, profiles, grid.t_min / window, grid.delta_t / window, n_quad)?;
    let n = tape.shape(q)[0];
    let head = tape.slice_rows(q, 0, n - 1)?;
    let tail = tape.slice_rows(q, 1, n)?;
    let diff = tape.sub(head, tail)?;
    let sq = tape.square(diff);
    let ms = tape.row_mean(sq);
    let w2 = tape.sqrt(ms)?;
    let total = tape.sum(w2);
    Ok(tape.scale(total, window))
}

fn decode_path(decoder: &dyn Decoder, waypoints: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, TransportError> {
    Ok(decoder.decode(waypoints)?)
}

fn length_of_decoded(decoded: &[Vec<f64>], grid: &TimeGrid, n_quad: usize) -> Result<f64, TransportError> {
    let quantiles = decoded
        .iter()
        .enumerate()
        .map(|(i, row)| {
            normalize_to_density(row, grid)
                .map(|d| d.midpoint_quantiles(n_quad))
                .map_err(|e| TransportError::Path { waypoint: i, reason: e.to_string() })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(quantiles.windows(2).map(|w| w2_from_quantiles(&w[0], &w[1])).sum())
}

/// Sum of consecutive W2 distances between decoded waypoints.
pub fn path_length(path: &GeodesicPath, decoder: &dyn Decoder, n_quad: usize) -> Result<f64, TransportError> {
    let decoded = decode_path(decoder, &path.waypoints)?;
    length_of_decoded(&decoded, &decoder.output_grid(), n_quad)
}

/// W2 distance between the decoded endpoints.
pub fn endpoint_distance(path: &GeodesicPath, decoder: &dyn Decoder, n_quad: usize) -> Result<f64, TransportError> {
    let ends = [path.waypoints[0].clone(), path.waypoints[path.waypoints.len() - 1].clone()];
    let decoded = decode_path(decoder, &ends)?;
    let grid = decoder.output_grid();
    let a = normalize_to_density(&decoded[0], &grid).map_err(|e| TransportError::Path { waypoint: 0, reason: e.to_string() })?;
    let b = normalize_to_density(&decoded[1], &grid)
        .map_err(|e| TransportError::Path { waypoint: path.waypoints.len() - 1, reason: e.to_string() })?;
    w2_1d(&a, &b, n_quad)
}

/// Path length divided by the endpoint W2 distance.
pub fn optimality_ratio(path: &GeodesicPath, decoder: &dyn Decoder, n_quad: usize) -> Result<f64, TransportError> {
    let w = endpoint_distance(path, decoder, n_quad)?;
    if !(w > 0.0) {
        return Err(TransportError::UndefinedRatio);
    }
    Ok(path_length(path, decoder, n_quad)? / w)
}

/// Fills in `length` and `ratio` (ratio stays `None` for coincident endpoints).
pub fn evaluate_path(mut path: GeodesicPath, decoder: &dyn Decoder, n_quad: usize) -> Result<GeodesicPath, TransportError> {
    let length = path_length(&path, decoder, n_quad)?;
    let w = endpoint_distance(&path, decoder, n_quad)?;
    path.length = Some(length);
    path.ratio = if w > 0.0 { Some(length / w) } else { None };
    Ok(path)
}

/// Minimizes the discrete path length over the interior waypoints with Adam.
///
/// Returns the lowest-length iterate seen, so the result is never longer than
/// the linear initialization.
pub fn optimize_geodesic(
    z_a: &[f64],
    z_b: &[f64],
    decoder: &dyn Decoder,
    options: &GeodesicOptions,
) -> Result<GeodesicPath, TransportError> {
    let n = options.n_waypoints;
    if n < 3 {
        return Err(TransportError::InvalidArgument(format!("{n} waypoints; optimization needs at least 3")));
    }
    let d = decoder.latent_dim();
    if z_a.len() != d || z_b.len() != d {
        return Err(TransportError::InvalidArgument(format!("endpoints must have {d} entries")));
    }
    let grid = decoder.output_grid();
    let init = linear_interpolate(z_a, z_b, n)?;
    let ends = decode_path(decoder, &[z_a.to_vec(), z_b.to_vec()])?;
    let l = ends[0].len();

    let mut interior: Vec<f64> = init.waypoints[1..n - 1].iter().flatten().copied().collect();
    let mut adam = AdamState::new(options.lr);
    let mut best = (f64::INFINITY, interior.clone());
    for step in 0..=options.steps {
        let mut tape = Tape::new();
        let start = tape.constant(Tensor::new(vec![1, l], ends[0].clone())?);
        let end = tape.constant(Tensor::new(vec![1, l], ends[1].clone())?);
        let z = tape.param(Tensor::new(vec![n - 2, d], interior.clone())?);
        let mid = decoder.decode_on_tape(&mut tape, z)?;
        let all = tape.concat_rows(&[start, mid, end])?;
        let length = path_length_on_tape(&mut tape, all, &grid, options.n_quad)?;
        let value = tape.value(length).item();
        if !value.is_finite() {
            return Err(TransportError::Divergence { step });
        }
        if value < best.0 {
            best = (value, interior.clone());
        }
        if step == options.steps || value == 0.0 {
            break;
        }
        let grads = tape.backward(length)?;
        let g = grads.get_or_zeros(z, &[n - 2, d]).into_data();
        if g.iter().any(|v| !v.is_finite()) {
            return Err(TransportError::Divergence { step });
        }
        let mut params = [std::mem::take(&mut interior)];
        adam.step(&mut params, &[g])?;
        let [p] = params;
        interior = p;
    }

    let mut waypoints = init.waypoints.clone();
    for (i, chunk) in best.1.chunks(d).enumerate() {
        waypoints[i + 1] = chunk.to_vec();
    }
    let optimized = evaluate_path(GeodesicPath { waypoints, ..init.clone() }, decoder, options.n_quad)?;
    let initial = evaluate_path(init, decoder, options.n_quad)?;
    if optimized.length > initial.length {
        return Ok(initial);
    }
    Ok(optimized)
}
