use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::bootstrap::{marker, paired_bootstrap};
use super::metrics::{hr_at_k, ndcg_at_k, rank_of, summarize};
use crate::error::{Error, Result};
use crate::rec::SeqRecModel;

/// Anything that scores the full catalog for a batch of histories. Row `b`
/// holds one score per item, index `j` for item `j + 1`.
pub trait Scorer {
    fn n_items(&self) -> usize;
    fn score_batch(&self, histories: &[&[usize]]) -> Result<Vec<Vec<f64>>>;
}

impl Scorer for SeqRecModel {
    fn n_items(&self) -> usize {
        self.n_items
    }

    fn score_batch(&self, histories: &[&[usize]]) -> Result<Vec<Vec<f64>>> {
        SeqRecModel::score_batch(self, histories)
    }
}

/// Scores every item by a fixed vector regardless of history.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticScorer(pub Vec<f64>);

impl Scorer for StaticScorer {
    fn n_items(&self) -> usize {
        self.0.len()
    }

    fn score_batch(&self, histories: &[&[usize]]) -> Result<Vec<Vec<f64>>> {
        Ok(histories.iter().map(|_| self.0.clone()).collect())
    }
}

/// 1-based full-catalog rank of each case's held-out item.
pub fn rank_cases<S: Scorer + ?Sized>(scorer: &S, cases: &[(Vec<usize>, usize)]) -> Result<Vec<usize>> {
    let mut ranks = Vec::with_capacity(cases.len());
    for chunk in cases.chunks(512) {
        let hist: Vec<&[usize]> = chunk.iter().map(|c| c.0.as_slice()).collect();
        let scores = scorer.score_batch(&hist)?;
        for (s, (_, target)) in scores.iter().zip(chunk) {
            if *target == 0 || *target > s.len() {
                return Err(Error::UnknownItem(*target));
            }
            ranks.push(rank_of(s, target - 1));
        }
    }
    Ok(ranks)
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HrNdcg {
    pub hr: f64,
    pub ndcg: f64,
}

/// HR@K and NDCG@K of one model in one setting, with the per-user ranks they
/// were computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub domain: String,
    pub model: String,
    pub setting: String,
    pub metrics: BTreeMap<usize, HrNdcg>,
    /// `"hr@10"`-style keys to a confidence marker; only set on a setting
    /// compared against a baseline.
    #[serde(default)]
    pub markers: BTreeMap<String, String>,
    #[serde(default)]
    pub ranks: Vec<usize>,
}

impl MetricReport {
    pub fn from_ranks(domain: &str, model: &str, setting: &str, ranks: Vec<usize>, ks: &[usize]) -> Result<Self> {
        let metrics = summarize(&ranks, ks)?
            .into_iter()
            .map(|c| (c.k, HrNdcg { hr: c.hr, ndcg: c.ndcg }))
            .collect();
        Ok(Self {
            domain: domain.into(),
            model: model.into(),
            setting: setting.into(),
            metrics,
            markers: BTreeMap::new(),
            ranks,
        })
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        self.metrics.get(&k).map(|m| m.ndcg)
    }

    pub fn hr(&self, k: usize) -> Option<f64> {
        self.metrics.get(&k).map(|m| m.hr)
    }

    /// Per-user HR@k and NDCG@k vectors.
    pub fn per_user(&self, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let hr = self.ranks.iter().map(|&r| hr_at_k(r, k)).collect::<Result<_>>()?;
        let nd = self.ranks.iter().map(|&r| ndcg_at_k(r, k)).collect::<Result<_>>()?;
        Ok((hr, nd))
    }

    /// Attaches markers to `self` from paired bootstraps of `self` against
    /// `base` on every metric, and returns the confidences.
    pub fn mark_against(
        &mut self,
        base: &MetricReport,
        n_resamples: usize,
        seed: u64,
    ) -> Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        let ks: Vec<usize> = self.metrics.keys().copied().collect();
        for (i, k) in ks.into_iter().enumerate() {
            let (bh, bn) = base.per_user(k)?;
            let (sh, sn) = self.per_user(k)?;
            for (j, (name, a, b)) in [("hr", bh, sh), ("ndcg", bn, sn)].into_iter().enumerate() {
                let key = alloc::format!("{name}@{k}");
                let c = paired_bootstrap(&a, &b, n_resamples, seed.wrapping_add((2 * i + j) as u64))?;
                if let Some(m) = marker(c) {
                    self.markers.insert(key.clone(), m.into());
                }
                out.insert(key, c);
            }
        }
        Ok(out)
    }
}

/// Ranks every case under `scorer` and summarizes at `ks`.
pub fn full_ranking_eval<S: Scorer + ?Sized>(
    scorer: &S,
    cases: &[(Vec<usize>, usize)],
    ks: &[usize],
) -> Result<MetricReport> {
    let ranks = rank_cases(scorer, cases)?;
    MetricReport::from_ranks("", "", "", ranks, ks)
}
