//! Synthetic worlds with a planted sensory signal.
//!
//! The catalog is grouped into sensory clusters. A cluster is a prototype
//! set of (facet, value) pairs; its items copy the prototype, swap some
//! values and sometimes gain an extra pair. An item's latent sensory vector
//! is the normalized sum of fixed basis vectors of its pairs (orthonormal
//! when `sensory_dim >= 64`). Texts and annotations are templated from the
//! same pairs, and the teacher target is a fixed random lift of the latent
//! vector to 768 dimensions plus a little noise. Each user prefers one
//! cluster and picks unseen items from
//! `softmax(gamma * cos(pref, latent) + log_popularity)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::log::{Interaction, InteractionLog};
use crate::error::{Error, Result};
use crate::math;
use crate::schema::{ItemAnnotation, ItemText, Polarity, SensoryFacet, SensoryRecord};
use crate::student::{TeacherTarget, TEACHER_DIM};

/// Value words per facet, indexed like [`SensoryFacet::ALL`].
pub const FACET_VALUES: [[&str; 4]; 16] = [
    ["crimson", "ivory", "navy", "olive"],
    ["striped", "floral", "plaid", "dotted"],
    ["round", "square", "oval", "slim"],
    ["logo", "cartoon", "lettered", "abstract"],
    ["bright", "dim", "vivid", "muted"],
    ["glossy", "matte", "satin", "lustrous"],
    ["clear", "opaque", "frosted", "tinted"],
    ["brushed", "polished", "lacquered", "powdered"],
    ["minimalist", "vintage", "ornate", "sporty"],
    ["silky", "gritty", "creamy", "velvety"],
    ["cushioned", "snug", "airy", "stiff"],
    ["lightweight", "heavy", "hefty", "featherlight"],
    ["cooling", "warming", "icy", "toasty"],
    ["vanilla", "citrus", "lavender", "unscented"],
    ["minty", "fruity", "sweet", "bitter"],
    ["quiet", "clicky", "squeaky", "silent"],
];

const NOUNS: [&str; 8] = [
    "lotion",
    "serum",
    "brush",
    "case",
    "mug",
    "candle",
    "headphones",
    "keyboard",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub min_seq_len: usize,
    pub max_seq_len: usize,
    /// Width of the latent sensory vectors.
    pub sensory_dim: usize,
    pub n_clusters: usize,
    /// Pairs in each cluster prototype.
    pub cluster_facets: usize,
    /// Chance that an item swaps a prototype value for another value of
    /// the same facet.
    pub value_swap_prob: f64,
    /// Chance that an item gains one pair on a facet outside its prototype.
    pub extra_facet_prob: f64,
    /// Weight of sensory affinity in the choice logits.
    pub gamma: f64,
    /// Exponent of the Zipf popularity prior.
    pub popularity_skew: f64,
    /// Norm of the noise added to the lifted teacher vector before
    /// normalization.
    pub teacher_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_users: 2000,
            n_items: 1000,
            min_seq_len: 5,
            max_seq_len: 15,
            sensory_dim: 64,
            n_clusters: 25,
            cluster_facets: 3,
            value_swap_prob: 0.3,
            extra_facet_prob: 0.5,
            gamma: 5.0,
            popularity_skew: 0.75,
            teacher_noise: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.n_items < 2 || self.n_users == 0 {
            return bad("synthetic world needs at least two items and one user");
        }
        if self.min_seq_len == 0 || self.min_seq_len > self.max_seq_len || self.max_seq_len > self.n_items {
            return bad("need 1 <= min_seq_len <= max_seq_len <= n_items");
        }
        if self.n_clusters == 0 || self.cluster_facets == 0 || self.cluster_facets > 15 {
            return bad("need n_clusters >= 1 and 1 <= cluster_facets <= 15");
        }
        if !(0.0..=1.0).contains(&self.value_swap_prob) || !(0.0..=1.0).contains(&self.extra_facet_prob) {
            return bad("value_swap_prob and extra_facet_prob must lie in [0, 1]");
        }
        if self.sensory_dim == 0 || !(self.gamma >= 0.0) || !(self.teacher_noise >= 0.0) {
            return bad("sensory_dim > 0, gamma >= 0 and teacher_noise >= 0 required");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticWorld {
    pub config: SyntheticConfig,
    pub log: InteractionLog,
    /// `(item_id, text)` in generation order.
    pub texts: Vec<(String, ItemText)>,
    pub annotations: Vec<ItemAnnotation>,
    pub targets: Vec<TeacherTarget>,
    /// Unit latent sensory vector per item, generation order.
    pub latent: Vec<Vec<f64>>,
    pub item_ids: Vec<String>,
    pub user_ids: Vec<String>,
    /// Cluster of each item, generation order.
    pub item_cluster: Vec<usize>,
    /// Preferred cluster of each user.
    pub user_cluster: Vec<usize>,
    /// Unit preference vector per user.
    pub preferences: Vec<Vec<f64>>,
    pub log_popularity: Vec<f64>,
}

pub fn item_id(j: usize) -> String {
    format!("i{j:05}")
}

pub fn user_id(u: usize) -> String {
    format!("u{u:05}")
}

fn unit_gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    normalize(&mut v);
    v
}

fn normalize(v: &mut [f64]) {
    let n = math::sqrt(v.iter().map(|x| x * x).sum());
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn sum_basis(basis: &[Vec<f64>], pairs: &[(usize, usize)], k: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    for &(f, val) in pairs {
        for (o, b) in v.iter_mut().zip(&basis[f * 4 + val]) {
            *o += b;
        }
    }
    normalize(&mut v);
    v
}

/// One unit vector per (facet, value) pair, Gram-Schmidt orthonormalized
/// while the dimension allows.
fn pair_basis(rng: &mut ChaCha8Rng, k: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(64);
    for _ in 0..64 {
        let mut v = unit_gaussian(rng, k);
        if basis.len() < k {
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
            normalize(&mut v);
        }
        basis.push(v);
    }
    basis
}

fn pick_pairs(rng: &mut ChaCha8Rng, m: usize) -> Vec<(usize, usize)> {
    let mut facets: Vec<usize> = (0..16).collect();
    facets.shuffle(rng);
    facets.truncate(m);
    facets.sort();
    facets.into_iter().map(|f| (f, rng.random_range(0..4))).collect()
}

fn item_pairs(rng: &mut ChaCha8Rng, proto: &[(usize, usize)], cfg: &SyntheticConfig) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = proto
        .iter()
        .map(|&(f, v)| {
            if rng.random::<f64>() < cfg.value_swap_prob {
                (f, (v + rng.random_range(1..4)) % 4)
            } else {
                (f, v)
            }
        })
        .collect();
    if rng.random::<f64>() < cfg.extra_facet_prob {
        let free: Vec<usize> = (0..16).filter(|f| proto.iter().all(|p| p.0 != *f)).collect();
        let f = free[rng.random_range(0..free.len())];
        pairs.push((f, rng.random_range(0..4)));
        pairs.sort();
    }
    pairs
}

/// Generates a world. Items and users use separate random streams, so the
/// catalog of a seed does not depend on `n_users` or `gamma`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticWorld> {
    cfg.check()?;
    let k = cfg.sensory_dim;
    let mut irng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x17e3_0000_0000_0001);
    let basis = pair_basis(&mut irng, k);
    let lift: Vec<f64> = (0..TEACHER_DIM * k).map(|_| StandardNormal.sample(&mut irng)).collect();

    let mut texts = Vec::with_capacity(cfg.n_items);
    let mut annotations = Vec::with_capacity(cfg.n_items);
    let mut targets = Vec::with_capacity(cfg.n_items);
    let mut latent = Vec::with_capacity(cfg.n_items);
    let protos: Vec<Vec<(usize, usize)>> = (0..cfg.n_clusters)
        .map(|_| pick_pairs(&mut irng, cfg.cluster_facets))
        .collect();
    let item_ids: Vec<String> = (0..cfg.n_items).map(item_id).collect();
    let mut item_cluster = Vec::with_capacity(cfg.n_items);
    for id in &item_ids {
        let c = irng.random_range(0..cfg.n_clusters);
        item_cluster.push(c);
        let pairs = item_pairs(&mut irng, &protos[c], cfg);
        let z = sum_basis(&basis, &pairs, k);
        let noun = NOUNS[irng.random_range(0..NOUNS.len())];

        let words: Vec<(SensoryFacet, &str)> = pairs
            .iter()
            .map(|&(f, v)| (SensoryFacet::ALL[f], FACET_VALUES[f][v]))
            .collect();
        let title = format!("{} {} {noun}", words[0].1, words[words.len() - 1].1);
        let description = words
            .iter()
            .map(|(f, v)| format!("{v} {}.", f.as_str()))
            .collect::<Vec<_>>()
            .join(" ");
        let reviews: Vec<String> = words
            .iter()
            .map(|(f, v)| format!("the {} is {v}, just as described", f.as_str()))
            .collect();
        let records = words
            .iter()
            .zip(&reviews)
            .map(|((f, v), r)| SensoryRecord {
                attribute: *f,
                value: String::from(*v),
                evidence: r.clone(),
                polarity: Polarity::Positive,
                negated: false,
                confidence: irng.random_range(0.7..1.0),
            })
            .collect();
        texts.push((
            id.clone(),
            ItemText {
                title,
                category: String::from(noun),
                description,
                reviews,
            },
        ));
        annotations.push(ItemAnnotation {
            item_id: id.clone(),
            attributes: records,
        });

        let mut t: Vec<f64> = (0..TEACHER_DIM)
            .map(|r| lift[r * k..(r + 1) * k].iter().zip(&z).map(|(a, b)| a * b).sum())
            .collect();
        normalize(&mut t);
        let noise = unit_gaussian(&mut irng, TEACHER_DIM);
        for (o, e) in t.iter_mut().zip(noise) {
            *o += cfg.teacher_noise * e;
        }
        normalize(&mut t);
        targets.push(TeacherTarget {
            item_id: id.clone(),
            z: t,
        });
        latent.push(z);
    }
    let mut ranks: Vec<usize> = (0..cfg.n_items).collect();
    ranks.shuffle(&mut irng);
    let log_popularity: Vec<f64> = ranks
        .iter()
        .map(|&r| -cfg.popularity_skew * math::ln(r as f64 + 1.0))
        .collect();

    let mut urng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x05e2_0000_0000_0002);
    let mut records = Vec::new();
    let mut preferences = Vec::with_capacity(cfg.n_users);
    let user_ids: Vec<String> = (0..cfg.n_users).map(user_id).collect();
    let mut logits = vec![0.0; cfg.n_items];
    let mut user_cluster = Vec::with_capacity(cfg.n_users);
    for (u, uid) in user_ids.iter().enumerate() {
        let c = urng.random_range(0..cfg.n_clusters);
        user_cluster.push(c);
        let pref = sum_basis(&basis, &protos[c], k);
        for (j, l) in logits.iter_mut().enumerate() {
            let cos: f64 = pref.iter().zip(&latent[j]).map(|(a, b)| a * b).sum();
            *l = cfg.gamma * cos + log_popularity[j];
        }
        let len = urng.random_range(cfg.min_seq_len..=cfg.max_seq_len);
        let mut taken = vec![false; cfg.n_items];
        for step in 0..len {
            let max = logits
                .iter()
                .zip(&taken)
                .filter(|(_, t)| !**t)
                .map(|(l, _)| *l)
                .fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logits
                .iter()
                .zip(&taken)
                .map(|(l, t)| if *t { 0.0 } else { math::exp(l - max) })
                .collect();
            let total: f64 = w.iter().sum();
            let mut r = urng.random::<f64>() * total;
            let mut pick = None;
            for (j, wj) in w.iter().enumerate() {
                if *wj == 0.0 {
                    continue;
                }
                pick = Some(j);
                if r < *wj {
                    break;
                }
                r -= wj;
            }
            let j = pick.expect("an unseen item remains");
            taken[j] = true;
            records.push(Interaction {
                user_id: uid.clone(),
                item_id: item_ids[j].clone(),
                timestamp: 1_400_000_000 + (u as i64) * 97 + (step as i64) * 86_400,
            });
        }
        preferences.push(pref);
    }
    Ok(SyntheticWorld {
        config: cfg.clone(),
        log: InteractionLog::new(records),
        texts,
        annotations,
        targets,
        latent,
        item_ids,
        user_ids,
        item_cluster,
        user_cluster,
        preferences,
        log_popularity,
    })
}

impl SyntheticWorld {
    /// The generator's own choice logits for user `u` over all items,
    /// generation order.
    pub fn true_logits(&self, u: usize) -> Vec<f64> {
        let pref = &self.preferences[u];
        self.latent
            .iter()
            .zip(&self.log_popularity)
            .map(|(z, p)| self.config.gamma * pref.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + p)
            .collect()
    }
}
