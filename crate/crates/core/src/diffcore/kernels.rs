//! Forward and backward kernels shared by the tape and the eager API.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Geometry of a 1-D convolution over `[channels x length]` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

impl ConvSpec {
    /// Left-padded so that each output only sees current and past inputs.
    pub fn causal(in_channels: usize, out_channels: usize, kernel: usize, dilation: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
            dilation,
            pad_left: (kernel.saturating_sub(1)) * dilation,
            pad_right: 0,
        }
    }

    /// Symmetric "same" padding for odd kernels, dilation 1.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        let pad = kernel.saturating_sub(1) / 2;
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
            dilation: 1,
            pad_left: pad,
            pad_right: kernel.saturating_sub(1) - pad,
        }
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        (in_len + self.pad_left + self.pad_right).saturating_sub((self.kernel - 1) * self.dilation)
    }

    /// Output positions `lo..hi` for which tap `j` reads a real input, and
    /// the input position read at `lo`; `None` when there are none.
    fn valid(&self, j: usize, in_len: usize, out_len: usize) -> Option<(usize, usize, usize)> {
        let shift = (j * self.dilation) as isize - self.pad_left as isize;
        let lo = (-shift).max(0) as usize;
        let hi = ((in_len as isize - shift).max(0) as usize).min(out_len);
        (lo < hi).then(|| (lo, hi, (lo as isize + shift) as usize))
    }

    pub(crate) fn check(&self, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<()> {
        if self.kernel == 0 || self.dilation == 0 {
            return Err(Error::Shape("kernel and dilation must be >= 1".into()));
        }
        x.expect_rank(2, "conv input")?;
        if x.dim(0) != self.in_channels {
            return Err(Error::Shape(format!(
                "conv input has {} channels, expected {}",
                x.dim(0),
                self.in_channels
            )));
        }
        if w.shape != [self.out_channels, self.in_channels, self.kernel] {
            return Err(Error::Shape(format!(
                "conv weights {:?}, expected [{}, {}, {}]",
                w.shape, self.out_channels, self.in_channels, self.kernel
            )));
        }
        if b.shape != [self.out_channels] {
            return Err(Error::Shape(format!(
                "conv bias {:?}, expected [{}]",
                b.shape, self.out_channels
            )));
        }
        Ok(())
    }
}

/// `c = a * b + beta * c` for row-major `c` of shape `[m x n]`, with `a`
/// (`[m x k]`) and `b` (`[k x n]`) given by row and column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    (m, k, n): (usize, usize, usize),
    a: &[f64],
    (a_rs, a_cs): (usize, usize),
    b: &[f64],
    (b_rs, b_cs): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(last(m, k, a_rs, a_cs) < a.len() && last(k, n, b_rs, b_cs) < b.len());
    }
    assert!(c.len() >= m * n);
    // SAFETY: every index reached through the strides was bounds-checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_rs as isize,
            a_cs as isize,
            b.as_ptr(),
            b_rs as isize,
            b_cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unrolls the input into `[(in_channels * kernel) x out_len]` so that the
/// convolution becomes one matrix product; padding reads as zero.
fn im2col(spec: &ConvSpec, x: &[f64], in_len: usize, out_len: usize) -> Vec<f64> {
    let k = spec.kernel;
    let mut col = vec![0.0; spec.in_channels * k * out_len];
    for ci in 0..spec.in_channels {
        let xrow = &x[ci * in_len..(ci + 1) * in_len];
        for j in 0..k {
            let Some((lo, hi, start)) = spec.valid(j, in_len, out_len) else { continue };
            let row = &mut col[(ci * k + j) * out_len..(ci * k + j + 1) * out_len];
            row[lo..hi].copy_from_slice(&xrow[start..start + hi - lo]);
        }
    }
    col
}

pub fn conv1d_forward(spec: &ConvSpec, x: &[f64], in_len: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = spec.out_len(in_len);
    let kk = spec.in_channels * spec.kernel;
    let mut out: Vec<f64> = b
        .iter()
        .take(spec.out_channels)
        .flat_map(|&bc| std::iter::repeat_n(bc, out_len))
        .collect();
    let col = im2col(spec, x, in_len, out_len);
    gemm((spec.out_channels, kk, out_len), w, (kk, 1), &col, (out_len, 1), 1.0, &mut out);
    out
}

/// Accumulates input, weight and bias gradients of a 1-D convolution.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward(
    spec: &ConvSpec,
    x: &[f64],
    in_len: usize,
    w: &[f64],
    grad_out: &[f64],
    grad_x: Option<&mut [f64]>,
    grad_w: Option<&mut [f64]>,
    grad_b: Option<&mut [f64]>,
) {
    let out_len = spec.out_len(in_len);
    let (co_n, k) = (spec.out_channels, spec.kernel);
    let kk = spec.in_channels * k;
    if let Some(gb) = grad_b {
        for (co, g) in gb.iter_mut().enumerate() {
            *g += grad_out[co * out_len..(co + 1) * out_len].iter().sum::<f64>();
        }
    }
    if out_len == 0 {
        return;
    }
    if let Some(gw) = grad_w {
        let col = im2col(spec, x, in_len, out_len);
        gemm((co_n, out_len, kk), grad_out, (out_len, 1), &col, (1, out_len), 1.0, gw);
    }
    if let Some(gx) = grad_x {
        let mut gcol = vec![0.0; kk * out_len];
        gemm((kk, co_n, out_len), w, (1, kk), grad_out, (out_len, 1), 0.0, &mut gcol);
        for ci in 0..spec.in_channels {
            let gxrow = &mut gx[ci * in_len..(ci + 1) * in_len];
            for j in 0..k {
                let Some((lo, hi, start)) = spec.valid(j, in_len, out_len) else { continue };
                let row = &gcol[(ci * k + j) * out_len..(ci * k + j + 1) * out_len];
                for (g, r) in gxrow[start..start + hi - lo].iter_mut().zip(&row[lo..hi]) {
                    *g += r;
                }
            }
        }
    }
}

/// `W x + b` with `W` of shape `[out x in]`.
pub fn linear_forward(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let p = x.len();
    b.iter()
        .enumerate()
        .map(|(c, bc)| bc + w[c * p..(c + 1) * p].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| (x - lse).exp()).collect()
}

/// Returns the loss and the softmax probabilities.
pub fn softmax_ce_forward(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let lse = log_sum_exp(logits);
    let probs = logits.iter().map(|x| (x - lse).exp()).collect();
    (lse - logits[target], probs)
}

/// Similarity matrix `U V^T / tau` for `[n x p]` row matrices.
pub fn similarities(u: &[f64], v: &[f64], n: usize, p: usize, tau: f64) -> Vec<f64> {
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        let ui = &u[i * p..(i + 1) * p];
        for j in 0..n {
            let vj = &v[j * p..(j + 1) * p];
            s[i * n + j] = ui.iter().zip(vj).map(|(a, b)| a * b).sum::<f64>() / tau;
        }
    }
    s
}

/// Batch InfoNCE: mean over anchors `i` of `-log softmax_j(s_ij)[i]`.
/// Returns the loss and the row-softmax matrix.
pub fn infonce_forward(u: &[f64], v: &[f64], n: usize, p: usize, tau: f64) -> (f64, Vec<f64>) {
    let s = similarities(u, v, n, p, tau);
    let mut probs = vec![0.0; n * n];
    let mut loss = 0.0;
    for i in 0..n {
        let row = &s[i * n..(i + 1) * n];
        let lse = log_sum_exp(row);
        loss += lse - row[i];
        for j in 0..n {
            probs[i * n + j] = (row[j] - lse).exp();
        }
    }
    (loss / n as f64, probs)
}

#[allow(clippy::too_many_arguments)]
pub fn infonce_backward(
    u: &[f64],
    v: &[f64],
    n: usize,
    p: usize,
    tau: f64,
    probs: &[f64],
    upstream: f64,
    grad_u: &mut [f64],
    grad_v: &mut [f64],
) {
    let scale = upstream / (n as f64 * tau);
    for i in 0..n {
        for j in 0..n {
            let ds = (probs[i * n + j] - if i == j { 1.0 } else { 0.0 }) * scale;
            if ds == 0.0 {
                continue;
            }
            for k in 0..p {
                grad_u[i * p + k] += ds * v[j * p + k];
                grad_v[j * p + k] += ds * u[i * p + k];
            }
        }
    }
}
