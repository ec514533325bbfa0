use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{pca::sample_covariance, LatentError};

/// Lower bound on covariance eigenvalues after every M-step.
pub const COVARIANCE_FLOOR: f64 = 1e-6;
/// Components whose effective count drops below this are reinitialized.
const EMPTY_COUNT: f64 = 1e-8;

/// Gaussian mixture with full covariances (row-major `d x d`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Mean per-sample log-likelihood at initialization and after every iteration.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    pub reinitialized: usize,
}

struct Component {
    log_norm: f64,
    chol: Cholesky<f64, nalgebra::Dyn>,
    mean: DVector<f64>,
}

impl GmmModel {
    pub fn dim(&self) -> usize {
        self.means.first().map(|m| m.len()).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), LatentError> {
        let k = self.weights.len();
        let d = self.dim();
        if k == 0 || self.means.len() != k || self.covariances.len() != k {
            return Err(LatentError::InvalidArgument("inconsistent component counts".into()));
        }
        if self.means.iter().any(|m| m.len() != d) || self.covariances.iter().any(|c| c.len() != d * d) {
            return Err(LatentError::InvalidArgument("inconsistent dimensions".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(LatentError::InvalidArgument(format!("weights sum to {total}")));
        }
        self.components().map(|_| ())
    }

    fn components(&self) -> Result<Vec<Component>, LatentError> {
        let d = self.dim();
        self.covariances
            .iter()
            .zip(&self.means)
            .enumerate()
            .map(|(k, (c, m))| {
                let cov = DMatrix::from_row_slice(d, d, c);
                let chol = Cholesky::new(cov)
                    .ok_or_else(|| LatentError::InvalidCovariance(format!("component {k} is not positive definite")))?;
                let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
                Ok(Component {
                    log_norm: -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det),
                    chol,
                    mean: DVector::from_column_slice(m),
                })
            })
            .collect()
    }

    /// Per-sample `log pi_k + log N(x | mu_k, Sigma_k)`.
    fn joint_log(&self, comps: &[Component], x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        comps
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| {
                let diff = &xv - &c.mean;
                let y = c.chol.l().solve_lower_triangular(&diff).expect("cholesky factor is invertible");
                w.ln() + c.log_norm - 0.5 * y.norm_squared()
            })
            .collect()
    }

    /// Mean per-sample log-likelihood.
    pub fn log_likelihood(&self, data: &[Vec<f64>]) -> Result<f64, LatentError> {
        let comps = self.components()?;
        Ok(data.iter().map(|x| log_sum_exp(&self.joint_log(&comps, x))).sum::<f64>() / data.len() as f64)
    }

    /// Posterior component probabilities for each row.
    pub fn responsibilities(&self, data: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, LatentError> {
        let comps = self.components()?;
        Ok(data
            .iter()
            .map(|x| {
                let l = self.joint_log(&comps, x);
                let z = log_sum_exp(&l);
                l.iter().map(|v| (v - z).exp()).collect()
            })
            .collect())
    }

    /// Most probable component of each row.
    pub fn predict(&self, data: &[Vec<f64>]) -> Result<Vec<usize>, LatentError> {
        Ok(self
            .responsibilities(data)?
            .iter()
            .map(|r| r.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k).unwrap_or(0))
            .collect())
    }

    /// Draws `n` samples with a seeded generator.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>, LatentError> {
        let comps = self.components()?;
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = self.weights.len() - 1;
                for (i, w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                let eps = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let x = &comps[k].mean + comps[k].chol.l() * eps;
                x.iter().copied().collect()
            })
            .collect())
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Symmetrizes and lifts eigenvalues below the floor.
fn floor_covariance(m: DMatrix<f64>) -> Vec<f64> {
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().all(|&v| v >= COVARIANCE_FLOOR) {
        return m.transpose().as_slice().to_vec();
    }
    let lifted = eig.eigenvalues.map(|v| v.max(COVARIANCE_FLOOR));
    let r = &eig.eigenvectors * DMatrix::from_diagonal(&lifted) * eig.eigenvectors.transpose();
    let r = (&r + r.transpose()) * 0.5;
    r.transpose().as_slice().to_vec()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: each new centre is drawn proportionally to the squared
/// distance from the nearest existing centre.
fn kmeans_pp(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centres = vec![data[rng.random_range(0..data.len())].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centres[0])).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|v| {
                    acc += v;
                    acc > target
                })
                .unwrap_or(data.len() - 1)
        } else {
            rng.random_range(0..data.len())
        };
        centres.push(data[idx].clone());
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min(sq_dist(x, &centres[centres.len() - 1]));
        }
    }
    centres
}

/// Fits a `k`-component mixture by expectation-maximization.
///
/// Stops when the mean log-likelihood improves by less than `tol` or after
/// `max_iter` iterations.
pub fn gmm_fit_em(data: &[Vec<f64>], k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<GmmFit, LatentError> {
    let n = data.len();
    if k == 0 || n < k {
        return Err(LatentError::Insufficient(format!("{n} samples for {k} components")));
    }
    let d = data[0].len();
    if d == 0 || data.iter().any(|r| r.len() != d) {
        return Err(LatentError::InvalidArgument("ragged or empty input".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, global_cov) = sample_covariance(data);
    let global = floor_covariance(global_cov);
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: kmeans_pp(data, k, &mut rng),
        covariances: vec![global.clone(); k],
    };
    let mut trace = vec![model.log_likelihood(data)?];
    let mut converged = false;
    let mut reinitialized = 0;
    for _ in 0..max_iter {
        let resp = model.responsibilities(data)?;
        let mut weights = Vec::with_capacity(k);
        let mut means = Vec::with_capacity(k);
        let mut covariances = Vec::with_capacity(k);
        for c in 0..k {
            let nk: f64 = resp.iter().map(|r| r[c]).sum();
            if nk < EMPTY_COUNT {
                let idx = rng.random_range(0..n);
                log::warn!("GMM component {c} is empty; reinitializing from sample {idx}");
                reinitialized += 1;
                weights.push(1.0 / n as f64);
                means.push(data[idx].clone());
                covariances.push(global.clone());
                continue;
            }
            let mut mu = vec![0.0; d];
            for (r, x) in resp.iter().zip(data) {
                for (m, v) in mu.iter_mut().zip(x) {
                    *m += r[c] * v;
                }
            }
            mu.iter_mut().for_each(|m| *m /= nk);
            let mut cov = DMatrix::<f64>::zeros(d, d);
            for (r, x) in resp.iter().zip(data) {
                let diff = DVector::from_iterator(d, x.iter().zip(&mu).map(|(a, b)| a - b));
                cov.ger(r[c] / nk, &diff, &diff, 1.0);
            }
            weights.push(nk / n as f64);
            means.push(mu);
            covariances.push(floor_covariance(cov));
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        model = GmmModel { weights, means, covariances };
        let ll = model.log_likelihood(data)?;
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(ll);
        if (ll - prev).abs() < tol {
            converged = true;
            break;
        }
    }
    Ok(GmmFit { model, log_likelihood: trace, converged, reinitialized })
}
