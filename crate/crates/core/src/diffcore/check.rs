//! Central finite-difference checks of tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var, BN_EPS, LEAKY_SLOPE};

/// Step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-4;

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape matches data")
}

/// Values bounded away from zero, for ops with a kink at the origin.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) { v } else { -v }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// Relative error (RMS over all input elements) between the tape gradient and
/// central differences of the scalar produced by `build`.
pub fn grad_check(inputs: &[Tensor], build: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let h = FD_STEP;
    let eval = |vals: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.param(t.clone())).collect();
        let out = build(&mut tape, &vars);
        (tape, vars, out)
    };
    let (tape, vars, out) = eval(inputs);
    let grads = tape.backward(out).expect("build returns a scalar");
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[k], input.shape());
        for i in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            let (tp, _, op) = eval(&plus);
            let (tm, _, om) = eval(&minus);
            let fd = (tp.value(op).item() - tm.value(om).item()) / (2.0 * h);
            let a = analytic.data()[i];
            num += (a - fd).powi(2);
            den += a.powi(2).max(fd.powi(2));
        }
    }
    if den == 0.0 { num.sqrt() } else { (num / den).sqrt() }
}

/// Reduces any output to a scalar through a fixed random weighting.
pub fn weighted_sum(tape: &mut Tape, y: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_tensor(&mut rng, tape.shape(y));
    let wv = tape.constant(w);
    let prod = tape.mul(y, wv).expect("same shape");
    tape.sum(prod)
}

type Maker = Box<dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor>>;
type Builder = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;

/// Worst relative error over `instances` random inputs for one operation.
pub fn check_op(instances: u64, make: &dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor>, build: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    (0..instances)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let inputs = make(&mut rng);
            grad_check(&inputs, &|t, v| {
                let y = build(t, v);
                if t.value(y).is_scalar() { y } else { weighted_sum(t, y, seed) }
            })
        })
        .fold(0.0, f64::max)
}

fn cases() -> Vec<(&'static str, Maker, Builder)> {
    fn r(rng: &mut ChaCha8Rng, s: &[usize]) -> Tensor {
        random_tensor(rng, s)
    }
    vec![
        (
            "conv1d",
            Box::new(|g| vec![r(g, &[2, 2, 9]), r(g, &[3, 2, 5]), r(g, &[3])]),
            Box::new(|t, v| t.conv1d(v[0], v[1], Some(v[2]), 2, 2).unwrap()),
        ),
        (
            "conv1d stride 1",
            Box::new(|g| vec![r(g, &[1, 3, 7]), r(g, &[2, 3, 3])]),
            Box::new(|t, v| t.conv1d(v[0], v[1], None, 1, 1).unwrap()),
        ),
        (
            "conv_transpose1d",
            Box::new(|g| vec![r(g, &[2, 3, 5]), r(g, &[3, 2, 5]), r(g, &[2])]),
            Box::new(|t, v| t.conv_transpose1d(v[0], v[1], Some(v[2]), 2, 2, 1).unwrap()),
        ),
        (
            "conv_transpose1d 1x1",
            Box::new(|g| vec![r(g, &[2, 2, 4]), r(g, &[2, 3, 1])]),
            Box::new(|t, v| t.conv_transpose1d(v[0], v[1], None, 2, 0, 1).unwrap()),
        ),
        (
            "linear",
            Box::new(|g| vec![r(g, &[3, 5]), r(g, &[4, 5]), r(g, &[4])]),
            Box::new(|t, v| t.linear(v[0], v[1], Some(v[2])).unwrap()),
        ),
        (
            "batch_norm train",
            Box::new(|g| vec![r(g, &[3, 2, 4]), r(g, &[2]), r(g, &[2])]),
            Box::new(|t, v| t.batch_norm_train(v[0], v[1], v[2], BN_EPS).unwrap().0),
        ),
        (
            "batch_norm eval",
            Box::new(|g| vec![r(g, &[3, 2, 4]), r(g, &[2]), r(g, &[2])]),
            Box::new(|t, v| t.batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.3], &[0.8, 1.7], BN_EPS).unwrap()),
        ),
        ("leaky_relu", Box::new(|g| vec![away_from_zero(g, &[12])]), Box::new(|t, v| t.leaky_relu(v[0], LEAKY_SLOPE))),
        ("tanh", Box::new(|g| vec![r(g, &[10])]), Box::new(|t, v| t.tanh(v[0]))),
        ("exp", Box::new(|g| vec![r(g, &[10])]), Box::new(|t, v| t.exp(v[0]))),
        ("square", Box::new(|g| vec![r(g, &[10])]), Box::new(|t, v| t.square(v[0]))),
        (
            "sqrt",
            Box::new(|g| {
                let mut x = r(g, &[10]);
                x.data_mut().iter_mut().for_each(|v| *v = v.abs() + 0.1);
                vec![x]
            }),
            Box::new(|t, v| t.sqrt(v[0]).unwrap()),
        ),
        ("scale", Box::new(|g| vec![r(g, &[6])]), Box::new(|t, v| t.scale(v[0], -2.5))),
        ("offset", Box::new(|g| vec![r(g, &[6])]), Box::new(|t, v| t.offset(v[0], 0.7))),
        ("add", Box::new(|g| vec![r(g, &[2, 3]), r(g, &[2, 3])]), Box::new(|t, v| t.add(v[0], v[1]).unwrap())),
        ("sub", Box::new(|g| vec![r(g, &[2, 3]), r(g, &[2, 3])]), Box::new(|t, v| t.sub(v[0], v[1]).unwrap())),
        ("mul", Box::new(|g| vec![r(g, &[2, 3]), r(g, &[2, 3])]), Box::new(|t, v| t.mul(v[0], v[1]).unwrap())),
        ("reshape", Box::new(|g| vec![r(g, &[2, 6])]), Box::new(|t, v| t.reshape(v[0], vec![3, 2, 2]).unwrap())),
        ("slice_cols", Box::new(|g| vec![r(g, &[3, 6])]), Box::new(|t, v| t.slice_cols(v[0], 1, 4).unwrap())),
        ("slice_rows", Box::new(|g| vec![r(g, &[4, 3])]), Box::new(|t, v| t.slice_rows(v[0], 1, 3).unwrap())),
        (
            "concat_rows",
            Box::new(|g| vec![r(g, &[1, 3]), r(g, &[2, 3])]),
            Box::new(|t, v| t.concat_rows(&[v[0], v[1], v[0]]).unwrap()),
        ),
        ("sum", Box::new(|g| vec![r(g, &[7])]), Box::new(|t, v| t.sum(v[0]))),
        ("mean", Box::new(|g| vec![r(g, &[7])]), Box::new(|t, v| t.mean(v[0]))),
        ("row_mean", Box::new(|g| vec![r(g, &[3, 4])]), Box::new(|t, v| t.row_mean(v[0]))),
        ("mse", Box::new(|g| vec![r(g, &[2, 5]), r(g, &[2, 5])]), Box::new(|t, v| t.mse(v[0], v[1]).unwrap())),
        (
            // conv -> batch norm -> tanh -> residual add, as used by the encoder.
            "residual block",
            Box::new(|g| vec![r(g, &[3, 2, 8]), r(g, &[3, 2, 3]), r(g, &[3]), r(g, &[3]), r(g, &[3, 2, 1])]),
            Box::new(|t, v| {
                let c = t.conv1d(v[0], v[1], None, 2, 1).unwrap();
                let (b, _, _) = t.batch_norm_train(c, v[2], v[3], BN_EPS).unwrap();
                let a = t.tanh(b);
                let skip = t.conv1d(v[0], v[4], None, 2, 0).unwrap();
                t.add(a, skip).unwrap()
            }),
        ),
    ]
}

/// Runs the gradient check for every tape operation; returns `(name, worst relative error)`.
pub fn op_suite(instances: u64) -> Vec<(&'static str, f64)> {
    cases().into_iter().map(|(name, make, build)| (name, check_op(instances, &*make, &*build))).collect()
}
