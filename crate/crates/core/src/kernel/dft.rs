//! Discrete Fourier transform along the sequence axis, by direct summation.
//!
//! Sequences here are short (tens of steps), so the O(L²) sum is cheaper
//! than setting up an FFT and its rounding is easy to reason about.

use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{Error, Result};
use crate::math;

/// Transforms packed complex rows. `x` is `[rows, d2]` with `rows` a multiple
/// of `seq`; columns `0..d2/2` are real parts and `d2/2..d2` imaginary parts.
/// Computes `scale · Σ_t x[t] · exp(sign · 2πi·k·t/seq)` for every block.
pub(crate) fn dft_packed(x: &[f64], rows: usize, d2: usize, seq: usize, sign: f64, scale: f64) -> Vec<f64> {
    let d = d2 / 2;
    let (cos, sin) = twiddles(seq);
    let mut out = vec![0.0; rows * d2];
    for b in 0..rows / seq {
        let base = b * seq * d2;
        for k in 0..seq {
            let orow = base + k * d2;
            for t in 0..seq {
                let w = (k * t) % seq;
                let (c, s) = (cos[w], sign * sin[w]);
                let irow = base + t * d2;
                for j in 0..d {
                    let (re, im) = (x[irow + j], x[irow + d + j]);
                    out[orow + j] += re * c - im * s;
                    out[orow + d + j] += re * s + im * c;
                }
            }
        }
    }
    if scale != 1.0 {
        out.iter_mut().for_each(|v| *v *= scale);
    }
    out
}

fn twiddles(n: usize) -> (Vec<f64>, Vec<f64>) {
    let step = 2.0 * core::f64::consts::PI / n as f64;
    let cos = (0..n).map(|w| math::cos(step * w as f64)).collect();
    let sin = (0..n).map(|w| math::sin(step * w as f64)).collect();
    (cos, sin)
}

/// Packs a real `[rows, d]` tensor as complex `[rows, 2d]` with zero
/// imaginary parts.
pub fn to_complex(x: &Tensor) -> Tensor {
    let d = x.cols();
    let mut data = Vec::with_capacity(x.len() * 2);
    for i in 0..x.rows() {
        data.extend_from_slice(x.row(i));
        data.extend(core::iter::repeat(0.0).take(d));
    }
    Tensor::matrix(x.rows(), 2 * d, data).expect("packed shape")
}

/// Forward transform of packed complex rows (no scaling).
pub fn dft(x: &Tensor, seq: usize) -> Result<Tensor> {
    transform(x, seq, -1.0, 1.0)
}

/// Inverse transform of packed complex rows, including the `1/seq` factor.
pub fn idft(x: &Tensor, seq: usize) -> Result<Tensor> {
    transform(x, seq, 1.0, 1.0 / seq as f64)
}

fn transform(x: &Tensor, seq: usize, sign: f64, scale: f64) -> Result<Tensor> {
    if seq == 0 || x.rows() % seq != 0 || x.cols() % 2 != 0 {
        return Err(Error::InvalidArgument(alloc::format!(
            "dft: shape {:?} with sequence length {seq}",
            x.shape()
        )));
    }
    Tensor::new(
        x.shape().to_vec(),
        dft_packed(x.data(), x.rows(), x.cols(), seq, sign, scale),
    )
}

/// Frequency index used for low/high-pass splits: bin `k` of an `n`-point
/// transform and its mirror `n - k` are the same frequency.
pub fn frequency_index(k: usize, n: usize) -> usize {
    k.min(n - k)
}
