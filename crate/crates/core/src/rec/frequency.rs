//! Band filters for the frequency-lite branch.

use alloc::vec;
use alloc::vec::Vec;

use crate::kernel::dft::{dft, frequency_index, idft, to_complex};
use crate::kernel::Tensor;

/// Real `n×n` matrix of `IDFT · diag(keep) · DFT` on length-`n` real
/// signals, where bin `k` is kept when `frequency_index(k, n) < cutoff`
/// (`low`) or otherwise (`!low`). Built by filtering each unit impulse.
pub fn band_filter(n: usize, cutoff: usize, low: bool) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for s in 0..n {
        let mut e = vec![0.0; n];
        e[s] = 1.0;
        let x = to_complex(&Tensor::matrix(n, 1, e).expect("shape"));
        let mut f = dft(&x, n).expect("dft");
        for k in 0..n {
            if (frequency_index(k, n) < cutoff) != low {
                f.row_mut(k).iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let y = idft(&f, n).expect("idft");
        for t in 0..n {
            m[t * n + s] = y.row(t)[0];
        }
    }
    m
}

/// For each window length `n` in `0..=max_len`, the last row of the low and
/// high band filters (index 0 is empty).
pub fn last_rows(max_len: usize, cutoff: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..=max_len)
        .map(|n| {
            if n == 0 {
                return (Vec::new(), Vec::new());
            }
            let lo = band_filter(n, cutoff, true);
            let hi = band_filter(n, cutoff, false);
            (lo[(n - 1) * n..].to_vec(), hi[(n - 1) * n..].to_vec())
        })
        .collect()
}

/// Per-sequence `[L, L]` mixing matrices for the prefix-causal filter: the
/// output at slot `t` is the last sample of the filtered window that runs
/// from the first real item up to `t`. Padded slots get zero rows.
pub fn prefix_mixing(valid: &[bool], len: usize, rows: &[(Vec<f64>, Vec<f64>)]) -> (Vec<f64>, Vec<f64>) {
    let bsz = valid.len() / len;
    let mut lo = vec![0.0; bsz * len * len];
    let mut hi = vec![0.0; bsz * len * len];
    for b in 0..bsz {
        let v = &valid[b * len..(b + 1) * len];
        let Some(first) = v.iter().position(|x| *x) else {
            continue;
        };
        for t in first..len {
            if !v[t] {
                continue;
            }
            let n = t - first + 1;
            let (rl, rh) = &rows[n];
            let base = b * len * len + t * len + first;
            lo[base..base + n].copy_from_slice(rl);
            hi[base..base + n].copy_from_slice(rh);
        }
    }
    (lo, hi)
}
