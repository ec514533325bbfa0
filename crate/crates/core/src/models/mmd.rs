use std::sync::Arc;

use crate::diffcore::{CustomOp, Tape, Tensor, Var};

use super::ModelError;

/// Default multipliers `s`; the kernel scales are `C = s * 2 * d_z`.
pub const DEFAULT_IMQ_MULTIPLIERS: [f64; 7] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];

/// Absolute IMQ scales for a latent dimension.
pub fn imq_scales(latent_dim: usize, multipliers: &[f64]) -> Vec<f64> {
    multipliers.iter().map(|s| s * 2.0 * latent_dim as f64).collect()
}

/// Scale-averaged kernel value and derivative with respect to the squared distance.
#[inline]
fn imq(r2: f64, scales: &[f64]) -> (f64, f64) {
    let (mut k, mut dk) = (0.0, 0.0);
    for &c in scales {
        let q = 1.0 / (c + r2);
        k += c * q;
        dk -= c * q * q;
    }
    let m = scales.len() as f64;
    (k / m, dk / m)
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check(n: usize, m: usize, d: usize, scales: &[f64]) -> Result<(), ModelError> {
    if n < 2 || m != n {
        return Err(ModelError::Shape(format!("MMD needs two batches of equal size >= 2, got {n} and {m}")));
    }
    if d == 0 {
        return Err(ModelError::Shape("MMD on zero-dimensional codes".into()));
    }
    if scales.is_empty() || scales.iter().any(|c| !(*c > 0.0)) {
        return Err(ModelError::InvalidConfig("IMQ scales must be positive".into()));
    }
    Ok(())
}

/// Unbiased U-statistic of MMD² between `x` and `y` (row-major `[n, d]`):
/// every sum runs over ordered pairs `i != j` and is divided by `n (n - 1)`.
fn mmd_flat(x: &[f64], y: &[f64], n: usize, d: usize, scales: &[f64]) -> f64 {
    fn row(v: &[f64], i: usize, d: usize) -> &[f64] {
        &v[i * d..(i + 1) * d]
    }
    let (mut kxx, mut kyy, mut kxy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            kxx += 2.0 * imq(sq_dist(row(x, i, d), row(x, j, d)), scales).0;
            kyy += 2.0 * imq(sq_dist(row(y, i, d), row(y, j, d)), scales).0;
        }
        for j in (0..n).filter(|&j| j != i) {
            kxy += imq(sq_dist(row(x, i, d), row(y, j, d)), scales).0;
        }
    }
    let nf = n as f64;
    (kxx + kyy - 2.0 * kxy) / (nf * (nf - 1.0))
}

/// Unbiased MMD² with the scale-averaged inverse multiquadratic kernel.
///
/// Rows of the two batches are paired by index, so the value is invariant
/// under a permutation applied to both batches together.
pub fn mmd_imq(z: &[Vec<f64>], prior: &[Vec<f64>], scales: &[f64]) -> Result<f64, ModelError> {
    let d = z.first().map_or(0, Vec::len);
    check(z.len(), prior.len(), d, scales)?;
    if z.iter().chain(prior).any(|r| r.len() != d) {
        return Err(ModelError::Shape("ragged MMD batch".into()));
    }
    let x: Vec<f64> = z.iter().flatten().copied().collect();
    let y: Vec<f64> = prior.iter().flatten().copied().collect();
    Ok(mmd_flat(&x, &y, z.len(), d, scales))
}

struct MmdOp {
    scales: Vec<f64>,
}

impl MmdOp {
    /// Gradient of the estimator with respect to the first batch.
    fn grad_first(&self, x: &[f64], y: &[f64], n: usize, d: usize) -> Vec<f64> {
        let nf = n as f64;
        let c = 4.0 / (nf * (nf - 1.0));
        let mut g = vec![0.0; n * d];
        for i in 0..n {
            let xi = &x[i * d..(i + 1) * d];
            let gi = &mut g[i * d..(i + 1) * d];
            for j in (0..n).filter(|&j| j != i) {
                let xj = &x[j * d..(j + 1) * d];
                let dk = imq(sq_dist(xi, xj), &self.scales).1;
                for ((gv, a), b) in gi.iter_mut().zip(xi).zip(xj) {
                    *gv += c * dk * (a - b);
                }
                let yj = &y[j * d..(j + 1) * d];
                let dk = imq(sq_dist(xi, yj), &self.scales).1;
                for ((gv, a), b) in gi.iter_mut().zip(xi).zip(yj) {
                    *gv -= c * dk * (a - b);
                }
            }
        }
        g
    }
}

impl CustomOp for MmdOp {
    fn name(&self) -> &str {
        "mmd_imq"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let (x, y) = (inputs[0], inputs[1]);
        let (n, d) = (x.shape()[0], x.shape()[1]);
        let up = grad.item();
        let scaled = |g: Vec<f64>| Tensor::new(vec![n, d], g.into_iter().map(|v| v * up).collect()).ok();
        // The estimator is symmetric in its arguments.
        vec![
            scaled(self.grad_first(x.data(), y.data(), n, d)),
            scaled(self.grad_first(y.data(), x.data(), n, d)),
        ]
    }
}

/// Records MMD² between `[n, d]` values `z` and `prior` on the tape.
pub fn mmd_on_tape(tape: &mut Tape, z: Var, prior: Var, scales: &[f64]) -> Result<Var, ModelError> {
    let (zs, ps) = (tape.shape(z).to_vec(), tape.shape(prior).to_vec());
    if zs.len() != 2 || zs != ps {
        return Err(ModelError::Shape(format!("MMD batches {zs:?} and {ps:?}")));
    }
    check(zs[0], ps[0], zs[1], scales)?;
    let v = mmd_flat(tape.value(z).data(), tape.value(prior).data(), zs[0], zs[1], scales);
    let op = Arc::new(MmdOp { scales: scales.to_vec() });
    Ok(tape.custom(&[z, prior], Tensor::scalar(v), op))
}
