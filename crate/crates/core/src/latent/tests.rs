use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;

fn normal_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

/// Cyclic Jacobi eigensolver, independent of the library routine.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[i][j].powi(2)).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let vals = idx.iter().map(|&i| a[i][i]).collect();
    let vecs = idx.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (vals, vecs)
}

#[test]
fn pca_matches_jacobi_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mix: Vec<Vec<f64>> = normal_rows(&mut rng, 8, 8);
    let data: Vec<Vec<f64>> = normal_rows(&mut rng, 200, 8)
        .into_iter()
        .map(|x| (0..8).map(|j| (0..8).map(|k| mix[j][k] * x[k]).sum::<f64>() + j as f64).collect())
        .collect();
    let model = pca_fit(&data).unwrap();
    let n = data.len() as f64;
    let mean: Vec<f64> = (0..8).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let cov: Vec<Vec<f64>> = (0..8)
        .map(|i| (0..8).map(|j| data.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1.0)).collect())
        .collect();
    let trace: f64 = (0..8).map(|i| cov[i][i]).sum();
    let (vals, vecs) = jacobi_eigen(cov);
    for k in 0..8 {
        assert!((model.variances[k] - vals[k]).abs() < 1e-6 * vals[0]);
        let dot: f64 = model.axes[k].iter().zip(&vecs[k]).map(|(a, b)| a * b).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-6, "axis {k}: {dot}");
    }
    assert!((model.explained(8) - trace).abs() < 1e-6 * trace);
    for i in 0..8 {
        for j in 0..8 {
            let dot: f64 = model.axes[i].iter().zip(&model.axes[j]).map(|(a, b)| a * b).sum();
            assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-6);
        }
        let pivot = model.axes[i].iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        assert!(pivot > 0.0);
    }
    assert!(model.variances.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn pca_rank_one_and_round_trip() {
    let line: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)]).collect();
    let m = pca_fit(&line).unwrap();
    let total: f64 = m.variances.iter().sum();
    assert!((m.variances[0] - total).abs() < 1e-9 * total);
    assert!(m.variances[1] < 1e-9 * total && m.variances[2] < 1e-9 * total);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data = normal_rows(&mut rng, 40, 5);
    let m = pca_fit(&data).unwrap();
    let coords = pca_project(&m, &data, 5).unwrap();
    for (x, c) in data.iter().zip(&coords) {
        for (a, b) in x.iter().zip(m.reconstruct_one(c)) {
            assert!((a - b).abs() < 1e-6);
        }
    }
    let dx: f64 = data[0].iter().zip(&data[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let dc: f64 = coords[0].iter().zip(&coords[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!((dx - dc).abs() < 1e-6);
    assert!(pca_project(&m, &[m.mean.clone()], 2).unwrap()[0].iter().all(|v| v.abs() < 1e-12));
    assert!(pca_project(&m, &data, 6).is_err());
    assert!(pca_project(&m, &data, 0).is_err());
    assert!(pca_fit(&data[..5]).is_err());
}

fn two_blobs(seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let c = if i % 2 == 0 { [-4.0, 0.0, 1.0] } else { [4.0, 1.0, -1.0] };
            c.iter().map(|m| m + 0.7 * rng.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect()
}

#[test]
fn gmm_single_component_recovers_sufficient_statistics() {
    let data = two_blobs(3, 400);
    let fit = gmm_fit_em(&data, 1, 0, 50, 1e-10).unwrap();
    let n = data.len() as f64;
    let d = 3;
    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    for j in 0..d {
        assert!((fit.model.means[0][j] - mean[j]).abs() < 1e-6);
        for k in 0..d {
            let c = data.iter().map(|r| (r[j] - mean[j]) * (r[k] - mean[k])).sum::<f64>() / n;
            assert!((fit.model.covariances[0][j * d + k] - c).abs() < 1e-6);
        }
    }
    assert_eq!(fit.model.weights, vec![1.0]);
}

#[test]
fn gmm_separates_blobs_monotonically() {
    for seed in 0..10u64 {
        let data = two_blobs(seed, 600);
        let fit = gmm_fit_em(&data, 2, seed, 200, 1e-9).unwrap();
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0), "seed {seed}: {} -> {}", w[0], w[1]);
        }
        let m = &fit.model;
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let left = if m.means[0][0] < m.means[1][0] { 0 } else { 1 };
        let truth = [[-4.0, 0.0, 1.0], [4.0, 1.0, -1.0]];
        for (c, t) in [left, 1 - left].iter().zip(truth) {
            for (a, b) in m.means[*c].iter().zip(t) {
                assert!((a - b).abs() < 0.25, "seed {seed}: {a} vs {b}");
            }
            assert!((m.weights[*c] - 0.5).abs() < 0.05);
        }
        m.validate().unwrap();
    }
}

#[test]
fn gmm_floor_and_sampling() {
    // Points on a plane in 3D: the third direction has zero variance.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.sample(StandardNormal), rng.sample(StandardNormal), 0.0]).collect();
    let fit = gmm_fit_em(&data, 2, 1, 50, 1e-8).unwrap();
    for c in &fit.model.covariances {
        let m = nalgebra::DMatrix::from_row_slice(3, 3, c);
        let min = nalgebra::SymmetricEigen::new(m).eigenvalues.min();
        assert!(min >= COVARIANCE_FLOOR * (1.0 - 1e-6));
    }
    let a = fit.model.sample(100, 9).unwrap();
    assert_eq!(a, fit.model.sample(100, 9).unwrap());
    assert!(gmm_fit_em(&data[..1], 2, 1, 10, 1e-6).is_err());
}

#[test]
fn gaussian_w2_closed_forms() {
    assert!((gaussian_w2(&[0.0], &[1.0], &[2.0], &[1.0]).unwrap() - 2.0).abs() < 1e-12);
    let mu = [1.0, -2.0, 0.5];
    let cov = [2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.7];
    assert!(gaussian_w2(&mu, &cov, &mu, &cov).unwrap() < 1e-7);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let d = 4;
        let (mi, mj): (Vec<f64>, Vec<f64>) = ((0..d).map(|_| rng.random_range(-2.0..2.0)).collect(), (0..d).map(|_| rng.random_range(-2.0..2.0)).collect());
        let (si, sj): (Vec<f64>, Vec<f64>) = ((0..d).map(|_| rng.random_range(0.01..3.0)).collect(), (0..d).map(|_| rng.random_range(0.01..3.0)).collect());
        let diag = |s: &[f64]| (0..d * d).map(|k| if k % (d + 1) == 0 { s[k / (d + 1)] } else { 0.0 }).collect::<Vec<f64>>();
        let expect2: f64 = mi.iter().zip(&mj).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            + si.iter().zip(&sj).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum::<f64>();
        let got = gaussian_w2(&mi, &diag(&si), &mj, &diag(&sj)).unwrap();
        assert!((got - expect2.sqrt()).abs() < 1e-8);
    }
}

fn random_psd(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let a: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut s = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            s[i * d + j] = (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum::<f64>() + if i == j { 0.05 } else { 0.0 };
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gaussian_w2_is_symmetric_and_triangular(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 5;
        let g: Vec<(Vec<f64>, Vec<f64>)> = (0..3)
            .map(|_| ((0..d).map(|_| rng.random_range(-1.0..1.0)).collect(), random_psd(&mut rng, d)))
            .collect();
        let w = |i: usize, j: usize| gaussian_w2(&g[i].0, &g[i].1, &g[j].0, &g[j].1).unwrap();
        prop_assert!((w(0, 1) - w(1, 0)).abs() < 1e-8);
        prop_assert!(w(0, 2) <= w(0, 1) + w(1, 2) + 1e-6);
    }
}

#[test]
fn gaussian_w2_rejects_indefinite() {
    let bad = [1.0, 0.0, 0.0, -1.0];
    assert!(matches!(gaussian_w2(&[0.0, 0.0], &bad, &[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]), Err(LatentError::InvalidCovariance(_))));
}

#[test]
fn normalized_matrix_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let k = 4;
    let gmm = GmmModel {
        weights: vec![0.25; k],
        means: (0..k).map(|_| (0..3).map(|_| rng.random_range(-3.0..3.0)).collect()).collect(),
        covariances: (0..k).map(|_| random_psd(&mut rng, 3)).collect(),
    };
    let w = normalized_pairwise_w2(&gmm).unwrap();
    let max = w.iter().flatten().cloned().fold(0.0, f64::max);
    assert_eq!(max, 1.0);
    for i in 0..k {
        assert_eq!(w[i][i], 0.0);
        for j in 0..k {
            assert_eq!(w[i][j], w[j][i]);
        }
    }
    let same = GmmModel { weights: vec![0.5, 0.5], means: vec![vec![0.0]; 2], covariances: vec![vec![1.0]; 2] };
    assert!(matches!(normalized_pairwise_w2(&same), Err(LatentError::Degenerate(_))));
}

#[test]
fn snr_and_mse_examples() {
    let x = vec![vec![1.0, 0.0, 0.0, 0.0]];
    assert!(snr_db(&x, &[vec![0.0; 4]]).unwrap().abs() < 1e-12);
    let y: Vec<Vec<f64>> = vec![vec![0.3, -0.7, 1.1, 0.2]];
    let scaled: Vec<Vec<f64>> = vec![y[0].iter().map(|v| v * (1.0 - 1e-3)).collect()];
    assert!((snr_db(&y, &scaled).unwrap() - 60.0).abs() < 1e-9);
    assert_eq!(snr_db(&y, &y).unwrap(), SNR_CAP_DB);
    assert_eq!(mse(&y, &y).unwrap(), 0.0);
    assert!((mse(&x, &[vec![0.0; 4]]).unwrap() - 0.25).abs() < 1e-15);
    assert!(snr_db(&[vec![0.0; 4]], &x).is_err());
}

#[test]
fn distance_correlation_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data = normal_rows(&mut rng, 600, 20);
    let scaled: Vec<Vec<f64>> = data.iter().map(|r| r.iter().map(|v| 3.5 * v).collect()).collect();
    let c = distance_correlation(&data, &scaled, COR_BATCHES, COR_BATCH_SIZE, 1).unwrap();
    assert!((c.mean - 1.0).abs() < 1e-9);
    assert_eq!(c.per_batch.len(), 50);
    let noise = normal_rows(&mut rng, 600, 8);
    let c = distance_correlation(&data, &noise, COR_BATCHES, COR_BATCH_SIZE, 1).unwrap();
    assert!(c.mean.abs() < 0.1, "{}", c.mean);
    let codes = normal_rows(&mut rng, 600, 4);
    let mixed: Vec<Vec<f64>> = data.iter().zip(&codes).map(|(d, z)| vec![d[0] + z[0], d[1], z[2]]).collect();
    let a = distance_correlation(&data, &mixed, 10, 64, 3).unwrap().mean;
    let bigger: Vec<Vec<f64>> = mixed.iter().map(|r| r.iter().map(|v| v * 42.0).collect()).collect();
    let b = distance_correlation(&data, &bigger, 10, 64, 3).unwrap().mean;
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn energy_correlation_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let coords = normal_rows(&mut rng, 2000, 3);
    let energies: Vec<f64> = coords.iter().map(|r| r[0]).collect();
    let r = energy_correlation(&coords, &energies).unwrap();
    assert!((r[0] - 1.0).abs() < 1e-12);
    assert!(r[1].abs() < 0.1 && r[2].abs() < 0.1);
    let mut shuffled = energies.clone();
    shuffled.shuffle(&mut rng);
    assert!(energy_correlation(&coords, &shuffled).unwrap().iter().all(|v| v.abs() < 0.1));
    assert!(energy_correlation(&coords, &vec![1.0; 2000]).is_err());
}

#[test]
fn canonical_shapes_attribute_to_themselves() {
    use crate::pulsegen::{canonical_profile, Envelope};
    let shapes = [Envelope::Flattop, Envelope::Gaussian { order: 1 }, Envelope::Triangular { order: 4 }];
    let profiles: Vec<Vec<f64>> = shapes.iter().map(|&e| canonical_profile(e, 23e-12).unwrap().values).collect();
    let grid = crate::pulsegen::TimeGrid::profile();
    let got = nearest_canonical_shape(&profiles, &grid).unwrap();
    for (e, (g, w)) in shapes.iter().zip(&got) {
        assert_eq!(e, g);
        assert!(*w < 1e-9, "{e:?}: {w}");
    }
}
