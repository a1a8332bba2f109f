//! Agreement between a predicted and a reference set of annotations.
//!
//! Every metric works per item on deduplicated (facet, normalized value)
//! pairs and sums integer counts across items before computing micro P/R/F1.
//! Counts keep the prediction side and the reference side apart
//! (`tp_pred` vs `tp_ref`) because the facet and taxonomy metrics let one
//! reference record cover several predictions.

mod audit;

pub use audit::{aggregate_audit, AuditReport, AuditVotes};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::schema::{dedup_pairs, normalize_text, ItemAnnotation, SensoryFacet};

/// Thresholds reported for semantic value match.
pub const SEMANTIC_THRESHOLDS: [f64; 3] = [0.8, 0.7, 0.6];

pub type Pair = (SensoryFacet, String);

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    /// Predictions that found a match.
    pub tp_pred: u64,
    pub fp: u64,
    /// References that were covered.
    pub tp_ref: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl MatchCounts {
    /// Counts for a one-to-one matching, where both true-positive tallies agree.
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self {
            tp_pred: tp,
            fp,
            tp_ref: tp,
            fn_,
        }
    }
}

impl core::ops::AddAssign for MatchCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp_pred += o.tp_pred;
        self.fp += o.fp;
        self.tp_ref += o.tp_ref;
        self.fn_ += o.fn_;
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Micro precision / recall / F1. An empty denominator counts as perfect
/// agreement (1.0); F1 is 0 when both P and R are 0.
pub fn micro_prf(c: &MatchCounts) -> PrfScore {
    let precision = ratio(c.tp_pred, c.tp_pred + c.fp);
    let recall = ratio(c.tp_ref, c.tp_ref + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PrfScore { precision, recall, f1 }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensoryClass {
    Visual,
    Tactile,
    Olfactory,
    Gustatory,
    Auditory,
}

/// Total map from facet to coarse sensory class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaxonomyMap {
    classes: [SensoryClass; 16],
}

impl TaxonomyMap {
    pub fn new(classes: [SensoryClass; 16]) -> Self {
        Self { classes }
    }

    pub fn class(&self, facet: SensoryFacet) -> SensoryClass {
        self.classes[facet.index()]
    }
}

impl Default for TaxonomyMap {
    fn default() -> Self {
        use SensoryClass::*;
        let mut classes = [Visual; 16];
        for f in SensoryFacet::ALL {
            classes[f.index()] = match f {
                SensoryFacet::Texture | SensoryFacet::Comfort | SensoryFacet::Weight | SensoryFacet::Temperature => {
                    Tactile
                }
                SensoryFacet::Scent => Olfactory,
                SensoryFacet::Flavor => Gustatory,
                SensoryFacet::Sound => Auditory,
                _ => Visual,
            };
        }
        Self { classes }
    }
}

/// Cosine of character-trigram count vectors of the normalized strings.
///
/// Equal normalized strings score 1.0 (even when shorter than three
/// characters); strings without any trigram otherwise score 0.0.
pub fn default_value_similarity(a: &str, b: &str) -> f64 {
    let (na, nb) = (normalize_text(a), normalize_text(b));
    if na == nb {
        return 1.0;
    }
    let (ta, tb) = (trigrams(&na), trigrams(&nb));
    if ta.is_empty() || tb.is_empty() {
        return 0.0;
    }
    let mut dot = 0u64;
    for (k, &ca) in &ta {
        if let Some(&cb) = tb.get(k) {
            dot += ca * cb;
        }
    }
    let sq = |m: &BTreeMap<[char; 3], u64>| m.values().map(|c| c * c).sum::<u64>() as f64;
    let denom = math::sqrt(sq(&ta)) * math::sqrt(sq(&tb));
    (dot as f64 / denom).clamp(0.0, 1.0)
}

fn trigrams(s: &str) -> BTreeMap<[char; 3], u64> {
    let chars: Vec<char> = s.chars().collect();
    let mut m = BTreeMap::new();
    for w in chars.windows(3) {
        *m.entry([w[0], w[1], w[2]]).or_insert(0) += 1;
    }
    m
}

/// Exact (facet, value) equality. Pairs are already distinct, so the
/// one-to-one matching is just the set intersection.
pub fn exact_counts(pred: &[Pair], refs: &[Pair]) -> MatchCounts {
    let r: BTreeSet<&Pair> = refs.iter().collect();
    let tp = pred.iter().filter(|p| r.contains(p)).count() as u64;
    MatchCounts::new(tp, pred.len() as u64 - tp, refs.len() as u64 - tp)
}

fn coverage_counts<K: Ord>(pred: &[Pair], refs: &[Pair], key: impl Fn(&Pair) -> K) -> MatchCounts {
    let pk: BTreeSet<K> = pred.iter().map(&key).collect();
    let rk: BTreeSet<K> = refs.iter().map(&key).collect();
    let tp_pred = pred.iter().filter(|p| rk.contains(&key(p))).count() as u64;
    let tp_ref = refs.iter().filter(|r| pk.contains(&key(r))).count() as u64;
    MatchCounts {
        tp_pred,
        fp: pred.len() as u64 - tp_pred,
        tp_ref,
        fn_: refs.len() as u64 - tp_ref,
    }
}

/// A prediction is correct when its facet occurs anywhere in the item's
/// reference; a reference is recalled when some prediction shares its facet.
pub fn facet_counts(pred: &[Pair], refs: &[Pair]) -> MatchCounts {
    coverage_counts(pred, refs, |p| p.0)
}

/// As [`facet_counts`], comparing taxonomy classes instead of facets.
pub fn taxonomy_counts(pred: &[Pair], refs: &[Pair], map: &TaxonomyMap) -> MatchCounts {
    coverage_counts(pred, refs, |p| map.class(p.0))
}

/// Greedy one-to-one matching over same-facet candidates.
///
/// Candidates are visited by descending similarity; ties go to exactly equal
/// normalized values first, then lower prediction index, then lower reference
/// index. A candidate is taken when both sides are free and the similarity is
/// strictly above `threshold`. Returns the matched `(pred, ref)` index pairs.
pub fn semantic_matching(
    pred: &[Pair],
    refs: &[Pair],
    sim: &dyn Fn(&str, &str) -> f64,
    threshold: f64,
) -> Vec<(usize, usize)> {
    let mut cands = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, r) in refs.iter().enumerate() {
            if p.0 == r.0 {
                cands.push((sim(&p.1, &r.1), p.1 == r.1, i, j));
            }
        }
    }
    cands.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(b.1.cmp(&a.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    let mut used_p = vec![false; pred.len()];
    let mut used_r = vec![false; refs.len()];
    let mut out = Vec::new();
    for (s, _, i, j) in cands {
        if s <= threshold {
            break;
        }
        if !used_p[i] && !used_r[j] {
            used_p[i] = true;
            used_r[j] = true;
            out.push((i, j));
        }
    }
    out
}

pub fn semantic_counts(pred: &[Pair], refs: &[Pair], sim: &dyn Fn(&str, &str) -> f64, threshold: f64) -> MatchCounts {
    let tp = semantic_matching(pred, refs, sim, threshold).len() as u64;
    MatchCounts::new(tp, pred.len() as u64 - tp, refs.len() as u64 - tp)
}

/// Deduplicated pairs of both sides for every item id present in either set,
/// in item-id order. Records of repeated ids are merged.
pub fn paired_items(pred: &[ItemAnnotation], refs: &[ItemAnnotation]) -> Vec<(String, Vec<Pair>, Vec<Pair>)> {
    let mut by_id: BTreeMap<&str, (Vec<crate::schema::SensoryRecord>, Vec<crate::schema::SensoryRecord>)> =
        BTreeMap::new();
    for a in pred {
        by_id
            .entry(&a.item_id)
            .or_default()
            .0
            .extend(a.attributes.iter().cloned());
    }
    for a in refs {
        by_id
            .entry(&a.item_id)
            .or_default()
            .1
            .extend(a.attributes.iter().cloned());
    }
    by_id
        .into_iter()
        .map(|(id, (p, r))| (String::from(id), dedup_pairs(&p), dedup_pairs(&r)))
        .collect()
}

fn sum_over(
    pred: &[ItemAnnotation],
    refs: &[ItemAnnotation],
    f: impl Fn(&[Pair], &[Pair]) -> MatchCounts,
) -> MatchCounts {
    let mut total = MatchCounts::default();
    for (_, p, r) in paired_items(pred, refs) {
        total += f(&p, &r);
    }
    total
}

pub fn exact_match(pred: &[ItemAnnotation], refs: &[ItemAnnotation]) -> MatchCounts {
    sum_over(pred, refs, exact_counts)
}

pub fn facet_selection(pred: &[ItemAnnotation], refs: &[ItemAnnotation]) -> MatchCounts {
    sum_over(pred, refs, facet_counts)
}

pub fn taxonomy_match(pred: &[ItemAnnotation], refs: &[ItemAnnotation], map: &TaxonomyMap) -> MatchCounts {
    sum_over(pred, refs, |p, r| taxonomy_counts(p, r, map))
}

pub fn semantic_value_match(
    pred: &[ItemAnnotation],
    refs: &[ItemAnnotation],
    sim: &dyn Fn(&str, &str) -> f64,
    threshold: f64,
) -> MatchCounts {
    sum_over(pred, refs, |p, r| semantic_counts(p, r, sim, threshold))
}

/// One row of an alignment report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRow {
    pub name: String,
    pub counts: MatchCounts,
    pub score: PrfScore,
}

/// All six rows: exact, facet, semantic at each threshold, taxonomy.
pub fn alignment_rows(
    pred: &[ItemAnnotation],
    refs: &[ItemAnnotation],
    sim: &dyn Fn(&str, &str) -> f64,
    thresholds: &[f64],
    map: &TaxonomyMap,
) -> Vec<AlignmentRow> {
    let row = |name: String, counts: MatchCounts| AlignmentRow {
        name,
        score: micro_prf(&counts),
        counts,
    };
    let mut rows = vec![
        row("Exact match".into(), exact_match(pred, refs)),
        row("Facet selection".into(), facet_selection(pred, refs)),
    ];
    for &t in thresholds {
        rows.push(row(
            alloc::format!("Semantic value match, {t:.1}"),
            semantic_value_match(pred, refs, sim, t),
        ));
    }
    rows.push(row("Taxonomy match".into(), taxonomy_match(pred, refs, map)));
    rows
}
