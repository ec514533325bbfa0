//! Raw 1D convolution kernels on `[batch, channels, length]` buffers.
//!
//! The transposed convolution reuses the input-gradient kernel of the plain
//! convolution (and vice versa), so only three loops exist here.

use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    /// Channels of the "narrow" side: the input of a plain convolution.
    pub c_in: usize,
    pub c_out: usize,
    pub len_in: usize,
    pub len_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// Range of output positions `lo` for which `lo*stride + k - pad` is a valid input index.
    #[inline]
    fn valid_range(&self, k: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let off = k as isize - self.pad as isize;
        // lo*s + off >= 0
        let lo_min = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        // lo*s + off <= len_in - 1
        let top = self.len_in as isize - 1 - off;
        if top < 0 {
            return (0, 0);
        }
        let lo_max = (top / s + 1).min(self.len_out as isize);
        if lo_max <= lo_min {
            (0, 0)
        } else {
            (lo_min as usize, lo_max as usize)
        }
    }
}

/// y[n, co, lo] = b[co] + sum_{ci,k} w[co, ci, k] * x[n, ci, lo*s + k - p]
pub(crate) fn forward(g: &ConvGeom, x: &[f64], w: &[f64], b: Option<&[f64]>) -> Vec<f64> {
    let mut out = vec![0.0; g.batch * g.c_out * g.len_out];
    out.par_chunks_mut(g.c_out * g.len_out)
        .enumerate()
        .for_each(|(n, out_n)| {
            let x_n = &x[n * g.c_in * g.len_in..(n + 1) * g.c_in * g.len_in];
            for co in 0..g.c_out {
                let row = &mut out_n[co * g.len_out..(co + 1) * g.len_out];
                if let Some(b) = b {
                    row.iter_mut().for_each(|v| *v = b[co]);
                }
                for ci in 0..g.c_in {
                    let xr = &x_n[ci * g.len_in..(ci + 1) * g.len_in];
                    let wr = &w[(co * g.c_in + ci) * g.kernel..(co * g.c_in + ci + 1) * g.kernel];
                    for (k, &wv) in wr.iter().enumerate() {
                        let (a, e) = g.valid_range(k);
                        if g.stride == 1 {
                            let start = a + k - g.pad;
                            for (o, xv) in row[a..e].iter_mut().zip(&xr[start..start + (e - a)]) {
                                *o += wv * xv;
                            }
                        } else {
                            for lo in a..e {
                                row[lo] += wv * xr[lo * g.stride + k - g.pad];
                            }
                        }
                    }
                }
            }
        });
    out
}

/// Adjoint of `forward` with respect to `x`:
/// gx[n, ci, lo*s + k - p] += w[co, ci, k] * gy[n, co, lo]
pub(crate) fn backward_input(g: &ConvGeom, gy: &[f64], w: &[f64]) -> Vec<f64> {
    let mut gx = vec![0.0; g.batch * g.c_in * g.len_in];
    gx.par_chunks_mut(g.c_in * g.len_in)
        .enumerate()
        .for_each(|(n, gx_n)| {
            let gy_n = &gy[n * g.c_out * g.len_out..(n + 1) * g.c_out * g.len_out];
            for co in 0..g.c_out {
                let gr = &gy_n[co * g.len_out..(co + 1) * g.len_out];
                for ci in 0..g.c_in {
                    let xr = &mut gx_n[ci * g.len_in..(ci + 1) * g.len_in];
                    let wr = &w[(co * g.c_in + ci) * g.kernel..(co * g.c_in + ci + 1) * g.kernel];
                    for (k, &wv) in wr.iter().enumerate() {
                        let (a, e) = g.valid_range(k);
                        if g.stride == 1 {
                            let start = a + k - g.pad;
                            for (xv, gv) in xr[start..start + (e - a)].iter_mut().zip(&gr[a..e]) {
                                *xv += wv * gv;
                            }
                        } else {
                            for lo in a..e {
                                xr[lo * g.stride + k - g.pad] += wv * gr[lo];
                            }
                        }
                    }
                }
            }
        });
    gx
}

/// Gradient of `forward` with respect to `w`, laid out as `[c_out, c_in, kernel]`.
pub(crate) fn backward_weight(g: &ConvGeom, gy: &[f64], x: &[f64]) -> Vec<f64> {
    let mut gw = vec![0.0; g.c_out * g.c_in * g.kernel];
    gw.par_chunks_mut(g.c_in * g.kernel)
        .enumerate()
        .for_each(|(co, gw_co)| {
            for n in 0..g.batch {
                let gr = &gy[(n * g.c_out + co) * g.len_out..(n * g.c_out + co + 1) * g.len_out];
                for ci in 0..g.c_in {
                    let xr = &x[(n * g.c_in + ci) * g.len_in..(n * g.c_in + ci + 1) * g.len_in];
                    for k in 0..g.kernel {
                        let (a, e) = g.valid_range(k);
                        let mut acc = 0.0;
                        if g.stride == 1 {
                            let start = a + k - g.pad;
                            for (gv, xv) in gr[a..e].iter().zip(&xr[start..start + (e - a)]) {
                                acc += gv * xv;
                            }
                        } else {
                            for lo in a..e {
                                acc += gr[lo] * xr[lo * g.stride + k - g.pad];
                            }
                        }
                        gw_co[ci * g.kernel + k] += acc;
                    }
                }
            }
        });
    gw
}

/// Per-channel sum of `gy` over batch and length.
pub(crate) fn bias_grad(batch: usize, channels: usize, len: usize, gy: &[f64]) -> Vec<f64> {
    let mut gb = vec![0.0; channels];
    for n in 0..batch {
        for (c, acc) in gb.iter_mut().enumerate() {
            *acc += gy[(n * channels + c) * len..(n * channels + c + 1) * len]
                .iter()
                .sum::<f64>();
        }
    }
    gb
}
