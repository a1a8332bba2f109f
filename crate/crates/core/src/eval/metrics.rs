use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Cutoffs reported by default.
pub const DEFAULT_KS: [usize; 3] = [5, 10, 20];

/// `1[rank ≤ k]`, with 1-based ranks.
pub fn hr_at_k(rank: usize, k: usize) -> Result<f64> {
    if rank < 1 {
        return Err(Error::InvalidRank(rank));
    }
    Ok(if rank <= k { 1.0 } else { 0.0 })
}

/// `1[rank ≤ k] / log2(rank + 1)`, with 1-based ranks.
pub fn ndcg_at_k(rank: usize, k: usize) -> Result<f64> {
    if rank < 1 {
        return Err(Error::InvalidRank(rank));
    }
    Ok(if rank <= k {
        1.0 / math::log2(rank as f64 + 1.0)
    } else {
        0.0
    })
}

/// 1-based rank of `scores[target]`: every strictly higher score ranks
/// ahead, and equal scores at lower indices rank ahead too.
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let st = scores[target];
    let mut rank = 1;
    for (j, &s) in scores.iter().enumerate() {
        if s > st || (s == st && j < target) {
            rank += 1;
        }
    }
    rank
}

/// Mean HR and NDCG at one cutoff.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffMetrics {
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
}

/// Averages over users, computed from their 1-based ranks.
pub fn summarize(ranks: &[usize], ks: &[usize]) -> Result<Vec<CutoffMetrics>> {
    let n = ranks.len().max(1) as f64;
    ks.iter()
        .map(|&k| {
            let (mut hr, mut ndcg) = (0.0, 0.0);
            for &r in ranks {
                hr += hr_at_k(r, k)?;
                ndcg += ndcg_at_k(r, k)?;
            }
            Ok(CutoffMetrics {
                k,
                hr: hr / n,
                ndcg: ndcg / n,
            })
        })
        .collect()
}
