use std::sync::Arc;

use super::conv::{self, ConvGeom};
use super::{DiffError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A fused operation defined outside the engine.
///
/// `backward` receives the input values, the forward output and the upstream
/// gradient, and returns one gradient per input (`None` when an input needs none).
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &str;
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>>;
}

enum Op {
    Leaf,
    Conv1d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    ConvTranspose1d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    Linear { x: Var, w: Var, b: Option<Var> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64>, train: bool },
    LeakyRelu { x: Var, slope: f64 },
    Tanh { x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    Offset { x: Var },
    Exp { x: Var },
    Square { x: Var },
    Sqrt { x: Var },
    Reshape { x: Var },
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    ConcatRows { parts: Vec<Var> },
    Sum { x: Var },
    Mean { x: Var },
    RowMean { x: Var },
    Mse { a: Var, b: Var },
    Custom { inputs: Vec<Var>, op: Arc<dyn CustomOp> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Record of forward computations, replayed in reverse by [`Tape::backward`].
///
/// Nodes are appended in execution order, so the list is topologically sorted
/// by construction.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of `shape` if `v` did not influence the loss.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape.to_vec()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn shape_err(msg: impl Into<String>) -> DiffError {
    DiffError::Shape(msg.into())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A trainable input: gradients are accumulated for it.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A fixed input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// `x: [n, c_in, len]`, `w: [c_out, c_in, k]`, `b: [c_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var, DiffError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] || stride == 0 {
            return Err(shape_err(format!("conv1d: input {xs:?} weight {ws:?} stride {stride}")));
        }
        if xs[2] + 2 * pad < ws[2] {
            return Err(shape_err("conv1d: kernel longer than padded input"));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[0]] {
                return Err(shape_err("conv1d: bias shape"));
            }
        }
        let geom = ConvGeom {
            batch: xs[0],
            c_in: ws[1],
            c_out: ws[0],
            len_in: xs[2],
            len_out: (xs[2] + 2 * pad - ws[2]) / stride + 1,
            kernel: ws[2],
            stride,
            pad,
        };
        let out = conv::forward(&geom, self.value(x).data(), self.value(w).data(), b.map(|b| self.value(b).data()));
        let t = Tensor::new(vec![geom.batch, geom.c_out, geom.len_out], out)?;
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(t, Op::Conv1d { x, w, b, geom }, ng))
    }

    /// `x: [n, c_in, len]`, `w: [c_in, c_out, k]`, `b: [c_out]`.
    /// Output length `(len - 1) * stride - 2 * pad + k + output_pad`.
    pub fn conv_transpose1d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        output_pad: usize,
    ) -> Result<Var, DiffError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[0] || stride == 0 || output_pad >= stride {
            return Err(shape_err(format!("conv_transpose1d: input {xs:?} weight {ws:?}")));
        }
        let full = (xs[2] - 1) * stride + ws[2] + output_pad;
        if full < 2 * pad + 1 {
            return Err(shape_err("conv_transpose1d: empty output"));
        }
        let len_out = full - 2 * pad;
        if let Some(b) = b {
            if self.shape(b) != [ws[1]] {
                return Err(shape_err("conv_transpose1d: bias shape"));
            }
        }
        // Seen as the adjoint of a convolution from `len_out` (ws[1] channels) to `xs[2]` (ws[0] channels).
        let geom = ConvGeom {
            batch: xs[0],
            c_in: ws[1],
            c_out: ws[0],
            len_in: len_out,
            len_out: xs[2],
            kernel: ws[2],
            stride,
            pad,
        };
        let mut out = conv::backward_input(&geom, self.value(x).data(), self.value(w).data());
        if let Some(b) = b {
            let bv = self.value(b).data();
            for (i, v) in out.iter_mut().enumerate() {
                *v += bv[(i / len_out) % geom.c_in];
            }
        }
        let t = Tensor::new(vec![geom.batch, geom.c_in, len_out], out)?;
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(t, Op::ConvTranspose1d { x, w, b, geom }, ng))
    }

    /// `x: [n, in]`, `w: [out, in]`, `b: [out]` → `[n, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, DiffError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(shape_err(format!("linear: input {xs:?} weight {ws:?}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[0]] {
                return Err(shape_err("linear: bias shape"));
            }
        }
        let (n, din, dout) = (xs[0], xs[1], ws[0]);
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = vec![0.0; n * dout];
        for i in 0..n {
            let xr = &xv[i * din..(i + 1) * din];
            for o in 0..dout {
                let wr = &wv[o * din..(o + 1) * din];
                let mut acc = b.map_or(0.0, |b| self.value(b).data()[o]);
                for (a, c) in xr.iter().zip(wr) {
                    acc += a * c;
                }
                out[i * dout + o] = acc;
            }
        }
        let t = Tensor::new(vec![n, dout], out)?;
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(t, Op::Linear { x, w, b }, ng))
    }

    /// Batch normalization over `[n, c, len]` using batch statistics.
    ///
    /// Returns the output together with the per-channel batch mean and the
    /// unbiased batch variance, for updating running statistics.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>), DiffError> {
        let xs = self.shape(x).to_vec();
        self.check_bn(&xs, gamma, beta)?;
        let (n, c, l) = (xs[0], xs[1], xs[2]);
        let count = (n * l) as f64;
        if n * l < 2 {
            return Err(shape_err("batch_norm: need at least two values per channel"));
        }
        let xv = self.value(x).data();
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let mut s = 0.0;
            for i in 0..n {
                s += xv[(i * c + ch) * l..(i * c + ch + 1) * l].iter().sum::<f64>();
            }
            let m = s / count;
            let mut ss = 0.0;
            for i in 0..n {
                ss += xv[(i * c + ch) * l..(i * c + ch + 1) * l]
                    .iter()
                    .map(|v| (v - m) * (v - m))
                    .sum::<f64>();
            }
            mean[ch] = m;
            var[ch] = ss / count;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let unbiased: Vec<f64> = var.iter().map(|v| v * count / (count - 1.0)).collect();
        let v = self.bn_apply(x, gamma, beta, &mean, inv_std, true)?;
        Ok((v, mean, unbiased))
    }

    /// Batch normalization with frozen statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Var, DiffError> {
        let xs = self.shape(x).to_vec();
        self.check_bn(&xs, gamma, beta)?;
        if running_mean.len() != xs[1] || running_var.len() != xs[1] {
            return Err(shape_err("batch_norm: running statistics length"));
        }
        let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        self.bn_apply(x, gamma, beta, running_mean, inv_std, false)
    }

    fn check_bn(&self, xs: &[usize], gamma: Var, beta: Var) -> Result<(), DiffError> {
        if xs.len() != 3 || self.shape(gamma) != [xs[1]] || self.shape(beta) != [xs[1]] {
            return Err(shape_err(format!("batch_norm: input {xs:?}")));
        }
        Ok(())
    }

    fn bn_apply(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        inv_std: Vec<f64>,
        train: bool,
    ) -> Result<Var, DiffError> {
        let xs = self.shape(x).to_vec();
        let (c, l) = (xs[1], xs[2]);
        let xv = self.value(x).data();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        for (i, (&v, (h, o))) in xv.iter().zip(xhat.iter_mut().zip(out.iter_mut())).enumerate() {
            let ch = (i / l) % c;
            *h = (v - mean[ch]) * inv_std[ch];
            *o = gv[ch] * *h + bv[ch];
        }
        let t = Tensor::new(xs, out)?;
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        Ok(self.push(t, Op::BatchNorm { x, gamma, beta, xhat, inv_std, train }, ng))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let t = self.map(x, |v| if v > 0.0 { v } else { slope * v });
        let ng = self.ng(x);
        self.push(t, Op::LeakyRelu { x, slope }, ng)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.map(x, f64::tanh);
        let ng = self.ng(x);
        self.push(t, Op::Tanh { x }, ng)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let t = self.map(x, f64::exp);
        let ng = self.ng(x);
        self.push(t, Op::Exp { x }, ng)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let t = self.map(x, |v| v * v);
        let ng = self.ng(x);
        self.push(t, Op::Square { x }, ng)
    }

    /// Square root of nonnegative values; the gradient at 0 is taken as 0.
    pub fn sqrt(&mut self, x: Var) -> Result<Var, DiffError> {
        if self.value(x).data().iter().any(|&v| v < 0.0) {
            return Err(DiffError::Domain("sqrt of negative value".into()));
        }
        let t = self.map(x, f64::sqrt);
        let ng = self.ng(x);
        Ok(self.push(t, Op::Sqrt { x }, ng))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.map(x, |v| v * c);
        let ng = self.ng(x);
        self.push(t, Op::Scale { x, c }, ng)
    }

    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        let t = self.map(x, |v| v + c);
        let ng = self.ng(x);
        self.push(t, Op::Offset { x }, ng)
    }

    fn map(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let v = self.value(x);
        Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| f(a)).collect()).expect("same shape")
    }

    fn zip(&self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, DiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(format!("{what}: {:?} vs {:?}", av.shape(), bv.shape())));
        }
        Tensor::new(
            av.shape().to_vec(),
            av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let t = self.zip(a, b, "add", |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Add { a, b }, ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let t = self.zip(a, b, "sub", |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Sub { a, b }, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let t = self.zip(a, b, "mul", |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Mul { a, b }, ng))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, DiffError> {
        let t = self.value(x).clone().reshaped(shape)?;
        let ng = self.ng(x);
        Ok(self.push(t, Op::Reshape { x }, ng))
    }

    /// Columns `start..end` of a 2-D `[n, d]` value.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, DiffError> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 || start >= end || end > xs[1] {
            return Err(shape_err(format!("slice_cols {start}..{end} of {xs:?}")));
        }
        let v = self.value(x).data();
        let mut out = Vec::with_capacity(xs[0] * (end - start));
        for i in 0..xs[0] {
            out.extend_from_slice(&v[i * xs[1] + start..i * xs[1] + end]);
        }
        let t = Tensor::new(vec![xs[0], end - start], out)?;
        let ng = self.ng(x);
        Ok(self.push(t, Op::SliceCols { x, start }, ng))
    }

    /// Rows `start..end` along the leading axis.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var, DiffError> {
        let xs = self.shape(x).to_vec();
        if xs.is_empty() || start >= end || end > xs[0] {
            return Err(shape_err(format!("slice_rows {start}..{end} of {xs:?}")));
        }
        let width = self.value(x).len() / xs[0];
        let data = self.value(x).data()[start * width..end * width].to_vec();
        let mut shape = xs.clone();
        shape[0] = end - start;
        let t = Tensor::new(shape, data)?;
        let ng = self.ng(x);
        Ok(self.push(t, Op::SliceRows { x, start }, ng))
    }

    /// Concatenation along the leading axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let first = parts.first().ok_or_else(|| shape_err("concat_rows: no parts"))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s[1..] != tail[..] {
                return Err(shape_err("concat_rows: trailing shapes differ"));
            }
            rows += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        let t = Tensor::new(shape, data)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(t, Op::ConcatRows { parts: parts.to_vec() }, ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let t = Tensor::scalar(self.value(x).data().iter().sum());
        let ng = self.ng(x);
        self.push(t, Op::Sum { x }, ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let t = Tensor::scalar(v.data().iter().sum::<f64>() / v.len() as f64);
        let ng = self.ng(x);
        self.push(t, Op::Mean { x }, ng)
    }

    /// Mean over everything but the leading axis: `[n, ...] → [n]`.
    pub fn row_mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let n = v.shape()[0];
        let w = v.len() / n;
        let data = (0..n).map(|i| v.data()[i * w..(i + 1) * w].iter().sum::<f64>() / w as f64).collect();
        let t = Tensor::new(vec![n], data).expect("row_mean shape");
        let ng = self.ng(x);
        self.push(t, Op::RowMean { x }, ng)
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let d = self.zip(a, b, "mse", |x, y| (x - y) * (x - y))?;
        let t = Tensor::scalar(d.data().iter().sum::<f64>() / d.len() as f64);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Mse { a, b }, ng))
    }

    /// Records the result of a fused operation computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, op: Arc<dyn CustomOp>) -> Var {
        let ng = inputs.iter().any(|&v| self.ng(v));
        self.push(output, Op::Custom { inputs: inputs.to_vec(), op }, ng)
    }

    /// Reverse accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, DiffError> {
        if !self.value(loss).is_scalar() {
            return Err(DiffError::NotScalar(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(self.shape(loss).to_vec(), vec![1.0])?);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(e) => e.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        let like = |v: Var, data: Vec<f64>| Tensor::new(self.shape(v).to_vec(), data).expect("grad shape");
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d { x, w, b, geom } => {
                if self.ng(*x) {
                    acc(*x, like(*x, conv::backward_input(geom, gd, self.value(*w).data())));
                }
                if self.ng(*w) {
                    acc(*w, like(*w, conv::backward_weight(geom, gd, self.value(*x).data())));
                }
                if let Some(b) = b {
                    acc(*b, like(*b, conv::bias_grad(geom.batch, geom.c_out, geom.len_out, gd)));
                }
            }
            Op::ConvTranspose1d { x, w, b, geom } => {
                // Output plays the role of the convolution input.
                if self.ng(*x) {
                    acc(*x, like(*x, conv::forward(geom, gd, self.value(*w).data(), None)));
                }
                if self.ng(*w) {
                    acc(*w, like(*w, conv::backward_weight(geom, self.value(*x).data(), gd)));
                }
                if let Some(b) = b {
                    acc(*b, like(*b, conv::bias_grad(geom.batch, geom.c_in, geom.len_in, gd)));
                }
            }
            Op::Linear { x, w, b } => {
                let xs = self.shape(*x);
                let (n, din) = (xs[0], xs[1]);
                let dout = self.shape(*w)[0];
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                if self.ng(*x) {
                    let mut gx = vec![0.0; n * din];
                    for i in 0..n {
                        let gr = &mut gx[i * din..(i + 1) * din];
                        for o in 0..dout {
                            let go = gd[i * dout + o];
                            for (a, c) in gr.iter_mut().zip(&wv[o * din..(o + 1) * din]) {
                                *a += go * c;
                            }
                        }
                    }
                    acc(*x, like(*x, gx));
                }
                if self.ng(*w) {
                    let mut gw = vec![0.0; dout * din];
                    for o in 0..dout {
                        let gr = &mut gw[o * din..(o + 1) * din];
                        for i in 0..n {
                            let go = gd[i * dout + o];
                            for (a, c) in gr.iter_mut().zip(&xv[i * din..(i + 1) * din]) {
                                *a += go * c;
                            }
                        }
                    }
                    acc(*w, like(*w, gw));
                }
                if let Some(b) = b {
                    let mut gb = vec![0.0; dout];
                    for i in 0..n {
                        for o in 0..dout {
                            gb[o] += gd[i * dout + o];
                        }
                    }
                    acc(*b, like(*b, gb));
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
                let xs = self.shape(*x);
                let (n, c, l) = (xs[0], xs[1], xs[2]);
                let gv = self.value(*gamma).data();
                let mut sum_g = vec![0.0; c];
                let mut sum_gx = vec![0.0; c];
                for (i, (&gi, &hi)) in gd.iter().zip(xhat).enumerate() {
                    let ch = (i / l) % c;
                    sum_g[ch] += gi;
                    sum_gx[ch] += gi * hi;
                }
                if self.ng(*x) {
                    let count = (n * l) as f64;
                    let gx: Vec<f64> = gd
                        .iter()
                        .zip(xhat)
                        .enumerate()
                        .map(|(i, (&gi, &hi))| {
                            let ch = (i / l) % c;
                            if *train {
                                gv[ch] * inv_std[ch] * (gi - sum_g[ch] / count - hi * sum_gx[ch] / count)
                            } else {
                                gv[ch] * inv_std[ch] * gi
                            }
                        })
                        .collect();
                    acc(*x, like(*x, gx));
                }
                acc(*gamma, like(*gamma, sum_gx));
                acc(*beta, like(*beta, sum_g));
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x).data();
                let gx = gd.iter().zip(xv).map(|(&gi, &v)| if v > 0.0 { gi } else { gi * slope }).collect();
                acc(*x, like(*x, gx));
            }
            Op::Tanh { x } => {
                let y = node.value.data();
                let gx = gd.iter().zip(y).map(|(&gi, &t)| gi * (1.0 - t * t)).collect();
                acc(*x, like(*x, gx));
            }
            Op::Exp { x } => {
                let y = node.value.data();
                let gx = gd.iter().zip(y).map(|(&gi, &e)| gi * e).collect();
                acc(*x, like(*x, gx));
            }
            Op::Square { x } => {
                let xv = self.value(*x).data();
                let gx = gd.iter().zip(xv).map(|(&gi, &v)| 2.0 * gi * v).collect();
                acc(*x, like(*x, gx));
            }
            Op::Sqrt { x } => {
                let y = node.value.data();
                let gx = gd
                    .iter()
                    .zip(y)
                    .map(|(&gi, &s)| if s > 0.0 { gi / (2.0 * s) } else { 0.0 })
                    .collect();
                acc(*x, like(*x, gx));
            }
            Op::Scale { x, c } => acc(*x, like(*x, gd.iter().map(|v| v * c).collect())),
            Op::Offset { x } | Op::Reshape { x } => acc(*x, like(*x, gd.to_vec())),
            Op::Add { a, b } => {
                acc(*a, like(*a, gd.to_vec()));
                acc(*b, like(*b, gd.to_vec()));
            }
            Op::Sub { a, b } => {
                acc(*a, like(*a, gd.to_vec()));
                acc(*b, like(*b, gd.iter().map(|v| -v).collect()));
            }
            Op::Mul { a, b } => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if self.ng(*a) {
                    acc(*a, like(*a, gd.iter().zip(bv).map(|(g, y)| g * y).collect()));
                }
                if self.ng(*b) {
                    acc(*b, like(*b, gd.iter().zip(av).map(|(g, y)| g * y).collect()));
                }
            }
            Op::SliceCols { x, start } => {
                let xs = self.shape(*x);
                let (n, d) = (xs[0], xs[1]);
                let w = node.value.shape()[1];
                let mut gx = vec![0.0; n * d];
                for i in 0..n {
                    gx[i * d + start..i * d + start + w].copy_from_slice(&gd[i * w..(i + 1) * w]);
                }
                acc(*x, like(*x, gx));
            }
            Op::SliceRows { x, start } => {
                let total = self.value(*x).len();
                let width = total / self.shape(*x)[0];
                let mut gx = vec![0.0; total];
                gx[start * width..start * width + gd.len()].copy_from_slice(gd);
                acc(*x, like(*x, gx));
            }
            Op::ConcatRows { parts } => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    acc(p, like(p, gd[off..off + n].to_vec()));
                    off += n;
                }
            }
            Op::Sum { x } => acc(*x, like(*x, vec![gd[0]; self.value(*x).len()])),
            Op::Mean { x } => {
                let n = self.value(*x).len();
                acc(*x, like(*x, vec![gd[0] / n as f64; n]));
            }
            Op::RowMean { x } => {
                let v = self.value(*x);
                let n = v.shape()[0];
                let w = v.len() / n;
                let gx = (0..v.len()).map(|i| gd[i / w] / w as f64).collect();
                acc(*x, like(*x, gx));
            }
            Op::Mse { a, b } => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let k = 2.0 * gd[0] / av.len() as f64;
                let ga: Vec<f64> = av.iter().zip(bv).map(|(x, y)| k * (x - y)).collect();
                if self.ng(*b) {
                    acc(*b, like(*b, ga.iter().map(|v| -v).collect()));
                }
                acc(*a, like(*a, ga));
            }
            Op::Custom { inputs, op } => {
                let ins: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                let gs = op.backward(&ins, &node.value, g);
                for (&v, gi) in inputs.iter().zip(gs) {
                    if let Some(gi) = gi {
                        acc(v, gi);
                    }
                }
            }
        }
    }
}
