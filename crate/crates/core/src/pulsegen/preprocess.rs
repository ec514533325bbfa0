use serde::{Deserialize, Serialize};

use super::{grid::STANDARD_SUPPORT, PulseError, TimeGrid};

/// Support threshold relative to the peak.
pub const SUPPORT_EPS: f64 = 1e-3;
/// Relative support mismatch below which no rescaling is applied.
pub const SUPPORT_SNAP: f64 = 2e-3;
const RECENTER_ITERS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileTag {
    Input,
    Propagated,
}

/// Peak-normalized, centred, support-standardized temporal intensity.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityProfile {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub tag: ProfileTag,
}

impl IntensityProfile {
    pub fn with_tag(mut self, tag: ProfileTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn centroid(&self) -> f64 {
        centroid(&self.values, &self.grid)
    }
}

/// Sum of samples times the grid step, in seconds.
pub fn pulse_energy(profile: &IntensityProfile) -> f64 {
    profile.values.iter().sum::<f64>() * profile.grid.delta_t
}

fn centroid(values: &[f64], grid: &TimeGrid) -> f64 {
    let mass: f64 = values.iter().sum();
    let moment: f64 = values.iter().enumerate().map(|(j, v)| grid.time(j) * v).sum();
    moment / mass
}

/// Monotone piecewise-cubic Hermite interpolant on a uniform grid.
struct Pchip<'a> {
    grid: TimeGrid,
    y: &'a [f64],
    slopes: Vec<f64>,
}

impl<'a> Pchip<'a> {
    fn new(y: &'a [f64], grid: TimeGrid) -> Self {
        let n = y.len();
        let h = grid.delta_t;
        let secant: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let mut slopes = vec![0.0; n];
        for j in 1..n - 1 {
            let (a, b) = (secant[j - 1], secant[j]);
            if a * b > 0.0 {
                slopes[j] = 2.0 / (1.0 / a + 1.0 / b);
            }
        }
        let edge = |d0: f64, d1: f64| {
            let d = 0.5 * (3.0 * d0 - d1);
            if d * d0 <= 0.0 {
                0.0
            } else if d0 * d1 < 0.0 && d.abs() > 3.0 * d0.abs() {
                3.0 * d0
            } else {
                d
            }
        };
        if n >= 3 {
            slopes[0] = edge(secant[0], secant[1]);
            slopes[n - 1] = edge(secant[n - 2], secant[n - 3]);
        } else {
            slopes[0] = secant[0];
            slopes[1] = secant[0];
        }
        Self { grid, y, slopes }
    }

    /// Zero outside the sampled range.
    fn eval(&self, t: f64) -> f64 {
        let x = (t - self.grid.t_min) / self.grid.delta_t;
        let last = (self.y.len() - 1) as f64;
        if !(0.0..=last).contains(&x) {
            return 0.0;
        }
        let j = (x.floor() as usize).min(self.y.len() - 2);
        self.eval_segment(j, x - j as f64)
    }

    fn eval_segment(&self, j: usize, s: f64) -> f64 {
        let h = self.grid.delta_t;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[j] + h10 * h * self.slopes[j] + h01 * self.y[j + 1] + h11 * h * self.slopes[j + 1]
    }

    /// Time in segment `j` where the interpolant crosses `level`, by bisection.
    fn crossing(&self, j: usize, level: f64) -> f64 {
        let rising = self.y[j + 1] > self.y[j];
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let above = self.eval_segment(j, mid) > level;
            if above == rising {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        self.grid.time(j) + 0.5 * (lo + hi) * self.grid.delta_t
    }
}

/// Peak-normalizes, centres and rescales a raw intensity to the standardized
/// 30 ps support, resampled onto `out_grid`.
pub fn preprocess(raw: &[f64], synthesis_grid: &TimeGrid, out_grid: &TimeGrid) -> Result<IntensityProfile, PulseError> {
    if raw.len() != synthesis_grid.n_points {
        return Err(PulseError::InvalidGrid(format!(
            "{} samples on a {}-point grid",
            raw.len(),
            synthesis_grid.n_points
        )));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(PulseError::Degenerate("non-finite intensity".into()));
    }
    let max = raw.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(PulseError::Degenerate("no positive intensity".into()));
    }
    let y: Vec<f64> = raw.iter().map(|&v| (v / max).max(0.0)).collect();
    let first = y.iter().position(|&v| v > SUPPORT_EPS).expect("peak is above threshold");
    let last = y.len() - 1 - y.iter().rev().position(|&v| v > SUPPORT_EPS).expect("peak is above threshold");
    if last - first + 1 < 3 {
        return Err(PulseError::Degenerate(format!("support of {} samples", last - first + 1)));
    }

    let interp = Pchip::new(&y, *synthesis_grid);
    let t_left = if first == 0 {
        synthesis_grid.t_min
    } else {
        interp.crossing(first - 1, SUPPORT_EPS)
    };
    let t_right = if last == y.len() - 1 {
        synthesis_grid.t_max()
    } else {
        interp.crossing(last, SUPPORT_EPS)
    };
    let support = t_right - t_left;
    let scale = if (support / STANDARD_SUPPORT - 1.0).abs() < SUPPORT_SNAP {
        1.0
    } else {
        STANDARD_SUPPORT / support
    };

    let center = out_grid.center();
    let resample = |c: f64| -> Vec<f64> {
        (0..out_grid.n_points)
            .map(|j| interp.eval(c + (out_grid.time(j) - center) / scale).max(0.0))
            .collect()
    };
    let mut c = centroid(&y, synthesis_grid);
    let mut values = resample(c);
    for _ in 0..RECENTER_ITERS {
        if !values.iter().any(|&v| v > 0.0) {
            break;
        }
        let offset = centroid(&values, out_grid) - center;
        if offset.abs() < 1e-7 * out_grid.delta_t {
            break;
        }
        c += offset / scale;
        values = resample(c);
    }
    let peak = values.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(PulseError::Degenerate("pulse falls outside the output window".into()));
    }
    for v in values.iter_mut() {
        *v /= peak;
    }
    Ok(IntensityProfile {
        grid: *out_grid,
        values,
        tag: ProfileTag::Input,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulsegen::{envelope_profile, Envelope, FrequencyGrid, PulseSpec};

    const PS: f64 = 1e-12;

    fn standardized(env: Envelope, sigma: f64) -> IntensityProfile {
        let g = FrequencyGrid::default().time_grid();
        let raw = envelope_profile(&PulseSpec::unchirped(env, sigma), &g).unwrap();
        preprocess(&raw, &g, &TimeGrid::profile()).unwrap()
    }

    fn support_length(p: &IntensityProfile) -> f64 {
        let interp = Pchip::new(&p.values, p.grid);
        let first = p.values.iter().position(|&v| v > SUPPORT_EPS).unwrap();
        let last = p.values.len() - 1 - p.values.iter().rev().position(|&v| v > SUPPORT_EPS).unwrap();
        interp.crossing(last, SUPPORT_EPS) - interp.crossing(first - 1, SUPPORT_EPS)
    }

    #[test]
    fn pchip_reproduces_nodes_and_lines() {
        let g = TimeGrid::new(6, 0.5, -1.0).unwrap();
        let y = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let p = Pchip::new(&y, g);
        for j in 0..6 {
            assert_eq!(p.eval(g.time(j)), y[j]);
        }
        assert!((p.eval(0.3) - 2.6).abs() < 1e-12);
        assert_eq!(p.eval(10.0), 0.0);
    }

    #[test]
    fn pchip_does_not_overshoot_steps() {
        let g = TimeGrid::new(8, 1.0, 0.0).unwrap();
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        let p = Pchip::new(&y, g);
        for k in 0..700 {
            let v = p.eval(k as f64 * 0.01);
            assert!((-1e-15..=1.0 + 1e-15).contains(&v));
        }
    }

    #[test]
    fn invariants_hold() {
        for env in Envelope::all() {
            for sigma in [2.0 * PS, 11.0 * PS, 40.0 * PS] {
                let p = standardized(env, sigma);
                assert_eq!(p.values.len(), 512);
                let max = p.values.iter().cloned().fold(0.0, f64::max);
                assert!((max - 1.0).abs() < 1e-6);
                assert!(p.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
                assert!(p.centroid().abs() < 0.5 * p.grid.delta_t, "{env:?}");
                let s = support_length(&p);
                assert!((s / STANDARD_SUPPORT - 1.0).abs() < 5e-3, "{env:?} {sigma} {s}");
            }
        }
    }

    #[test]
    fn width_is_factored_out() {
        let a = standardized(Envelope::Gaussian { order: 1 }, 5.0 * PS);
        let b = standardized(Envelope::Gaussian { order: 1 }, 20.0 * PS);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-3);
        }
    }

    #[test]
    fn flattop_fills_standard_support() {
        let p = standardized(Envelope::Flattop, 17.0 * PS);
        let inside = p.values.iter().filter(|&&v| v > 0.999).count() as f64 * p.grid.delta_t;
        // The flat part covers 90% of the support, the edges the rest.
        assert!((inside / (0.9 * STANDARD_SUPPORT) - 1.0).abs() < 0.03);
        let energy = pulse_energy(&p);
        assert!((energy / (0.95 * STANDARD_SUPPORT) - 1.0).abs() < 0.01);
    }

    #[test]
    fn triangle_is_half_of_flattop() {
        let t = pulse_energy(&standardized(Envelope::Triangular { order: 1 }, 9.0 * PS));
        assert!((t / (0.5 * STANDARD_SUPPORT) - 1.0).abs() < 0.01, "{t}");
    }

    #[test]
    fn idempotent() {
        let out = TimeGrid::profile();
        for env in Envelope::all() {
            let p = standardized(env, 7.0 * PS);
            let q = preprocess(&p.values, &out, &out).unwrap();
            for (a, b) in p.values.iter().zip(&q.values) {
                assert!((a - b).abs() < 1e-5, "{env:?}");
            }
        }
    }

    #[test]
    fn degenerate_inputs() {
        let g = TimeGrid::new(16, 1.0, 0.0).unwrap();
        assert!(matches!(preprocess(&[0.0; 16], &g, &g), Err(PulseError::Degenerate(_))));
        let mut spike = [0.0; 16];
        spike[5] = 1.0;
        spike[6] = 0.5;
        assert!(matches!(preprocess(&spike, &g, &g), Err(PulseError::Degenerate(_))));
        assert!(preprocess(&[1.0; 3], &g, &g).is_err());
    }

    #[test]
    fn rectangle_energy() {
        let g = TimeGrid::profile();
        let values = (0..512).map(|j| if (64..448).contains(&j) { 1.0 } else { 0.0 }).collect();
        let e = pulse_energy(&IntensityProfile { grid: g, values, tag: ProfileTag::Input });
        assert!((e - STANDARD_SUPPORT).abs() < 1e-24);
    }

    #[test]
    fn energy_translation_invariant() {
        let g = TimeGrid::profile();
        let mut v = vec![0.0; 512];
        for j in 100..200 {
            v[j] = 0.5;
        }
        let a = IntensityProfile { grid: g, values: v.clone(), tag: ProfileTag::Input };
        v.rotate_right(37);
        let b = IntensityProfile { grid: g, values: v, tag: ProfileTag::Input };
        assert_eq!(pulse_energy(&a), pulse_energy(&b));
    }
}
