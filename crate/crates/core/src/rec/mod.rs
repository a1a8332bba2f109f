//! Early fusion of ID and sensory embeddings, and three sequential
//! backbones that consume the fused tokens: causal self-attention, masked
//! (bidirectional) item prediction, and a frequency-lite variant that adds a
//! band-filtered view of the ID-embedding sequence.
//!
//! Items are indexed `1..=n_items`; index 0 is padding. Sequences are
//! left-padded so the most recent item always sits in the last slot.

pub mod frequency;
mod train;

pub use train::{train_model, validation_ndcg10, EpochLog, RecData};

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{AttentionMask, Graph, ParamId, ParamStore, Tensor, Var};
use crate::math;
use crate::student::{SensoryEmbeddingTable, TEACHER_DIM};

const PAD: usize = usize::MAX;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Causal,
    Masked,
    Frequency,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [Self::Causal, Self::Masked, Self::Frequency];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Causal => "causal",
            Self::Masked => "masked",
            Self::Frequency => "frequency",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeqModelConfig {
    pub kind: ModelKind,
    /// Hidden width.
    pub d: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_len: usize,
    /// Width of the projected sensory vector; `None` means `d / 2`.
    pub d_s: Option<usize>,
    pub use_sensory: bool,
    /// Masked kind: per-position masking probability.
    pub mask_prob: f64,
    /// Causal and frequency kinds: sampled negatives per positive.
    pub n_negatives: usize,
    /// Frequency kind: bins with frequency index below this are "low".
    pub freq_cutoff: usize,
    pub freq_alpha_init: f64,
    pub freq_beta_init: f64,
    /// Applied to the ID path and to residual branches, never to the
    /// sensory path.
    pub dropout: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation NDCG@10 gain before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for SeqModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Causal,
            d: 32,
            n_layers: 1,
            n_heads: 1,
            max_len: 20,
            d_s: None,
            use_sensory: false,
            mask_prob: 0.2,
            n_negatives: 100,
            freq_cutoff: 2,
            freq_alpha_init: 1.0,
            freq_beta_init: 0.5,
            dropout: 0.1,
            lr: 1e-3,
            batch_size: 128,
            max_epochs: 100,
            patience: 10,
            seed: 0,
        }
    }
}

impl SeqModelConfig {
    pub fn sensory_width(&self) -> usize {
        self.d_s.unwrap_or(self.d / 2)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d == 0 || self.n_heads == 0 || self.d % self.n_heads != 0 {
            return bad(alloc::format!(
                "d = {} must be a positive multiple of n_heads = {}",
                self.d,
                self.n_heads
            ));
        }
        if self.use_sensory && self.sensory_width() == 0 {
            return bad("d_s must be >= 1 when use_sensory is set".into());
        }
        if self.max_len < 2 {
            return bad("max_len must be >= 2".into());
        }
        if !(self.mask_prob > 0.0 && self.mask_prob <= 1.0) {
            return bad(alloc::format!("mask_prob {} outside (0, 1]", self.mask_prob));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(alloc::format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.batch_size == 0 || self.n_negatives == 0 {
            return bad("batch_size and n_negatives must be >= 1".into());
        }
        Ok(())
    }
}

/// One input slot of a padded batch.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Slot {
    Pad,
    Item(usize),
    /// Replaced wholesale by the learned mask embedding.
    Mask,
}

/// A prepared training batch: `bsz × len` slots, scored positions with their
/// true items, and sampled negatives (`n_negatives` per target) for the
/// sampled-softmax kinds.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub bsz: usize,
    pub len: usize,
    pub slots: Vec<Slot>,
    pub targets: Vec<(usize, usize)>,
    pub negatives: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
struct LayerParams {
    ln1_g: ParamId,
    ln1_b: ParamId,
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    ff_w1: ParamId,
    ff_b1: ParamId,
    ff_w2: ParamId,
    ff_b2: ParamId,
    freq: Option<(ParamId, ParamId)>,
}

/// `W_s` (`d_s × 768`) and `W_f` (`d × (d + d_s)`).
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct FusionParams {
    pub w_s: ParamId,
    pub w_f: ParamId,
}

/// Fused token embeddings for a set of items: `e = W_f · [v ; W_s · s]`,
/// row-wise for `v` `[n, d]` and `s` `[n, 768]`.
pub fn fuse(g: &mut Graph, v: Var, s: Var, fp: FusionParams) -> Result<Var> {
    let w_s = g.param(fp.w_s);
    let w_f = g.param(fp.w_f);
    let s_hat = g.matmul_t(s, w_s)?;
    let cat = g.concat(v, s_hat)?;
    g.matmul_t(cat, w_f)
}

/// A sequential recommender with its parameters and frozen sensory rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqRecModel {
    pub config: SeqModelConfig,
    pub n_items: usize,
    pub params: ParamStore,
    item_emb: ParamId,
    pos_emb: ParamId,
    mask_emb: Option<ParamId>,
    layers: Vec<LayerParams>,
    ln_g: ParamId,
    ln_b: ParamId,
    fusion: Option<FusionParams>,
    /// `[n_items + 1, 768]`, row 0 unused.
    sensory: Option<Tensor>,
    freq_rows: Vec<(Vec<f64>, Vec<f64>)>,
}

fn normal(rng: &mut ChaCha8Rng, shape: Vec<usize>, std: f64) -> Tensor {
    let n = shape.iter().product();
    let dist = Normal::new(0.0, std).expect("finite std");
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect()).expect("shape")
}

/// Sensory rows for items `1..=item_ids.len()` (`item_ids[i]` is item
/// `i + 1`), as a `[n + 1, dim]` matrix with a zero padding row.
pub fn sensory_matrix(table: &SensoryEmbeddingTable, item_ids: &[String]) -> Result<Tensor> {
    let dim = table.dim();
    let mut data = vec![0.0; (item_ids.len() + 1) * dim];
    let mut missing = Vec::new();
    for (i, id) in item_ids.iter().enumerate() {
        match table.get(id) {
            Some(row) => {
                for (o, v) in data[(i + 1) * dim..(i + 2) * dim].iter_mut().zip(row) {
                    *o = *v as f64;
                }
            }
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingSensoryRows(missing));
    }
    Tensor::matrix(item_ids.len() + 1, dim, data)
}

impl SeqRecModel {
    /// Initializes a model. `sensory` is required exactly when
    /// `config.use_sensory` is set.
    ///
    /// Backbone parameters come from one seeded stream and fusion parameters
    /// from another, so a Base and a Sens model with the same seed share
    /// every backbone weight. `W_f` starts as `[I | small noise]`.
    pub fn new(config: SeqModelConfig, n_items: usize, sensory: Option<Tensor>) -> Result<Self> {
        config.check()?;
        if n_items < 2 {
            return Err(Error::Config("catalog needs at least two items".into()));
        }
        match (&sensory, config.use_sensory) {
            (Some(s), true) => {
                if s.shape() != [n_items + 1, TEACHER_DIM] {
                    return Err(Error::ShapeMismatch {
                        op: "sensory matrix",
                        left: vec![n_items + 1, TEACHER_DIM],
                        right: s.shape().to_vec(),
                    });
                }
            }
            (None, false) => {}
            (None, true) => return Err(Error::Config("use_sensory needs a sensory table".into())),
            (Some(_), false) => return Err(Error::Config("sensory table given but use_sensory is off".into())),
        }
        let d = config.d;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let xavier = |i: usize, o: usize| math::sqrt(2.0 / (i + o) as f64);
        let mut items = normal(&mut rng, vec![n_items + 1, d], 1.0 / math::sqrt(d as f64));
        items.row_mut(0).iter_mut().for_each(|v| *v = 0.0);
        let item_emb = params.add("item_emb", items);
        let pos_emb = params.add("pos_emb", normal(&mut rng, vec![config.max_len, d], 0.02));
        let mask_emb = (config.kind == ModelKind::Masked)
            .then(|| params.add("mask_emb", normal(&mut rng, vec![1, d], 1.0 / math::sqrt(d as f64))));
        let mut layers = Vec::new();
        for l in 0..config.n_layers {
            let name = |s: &str| alloc::format!("layer{l}.{s}");
            let ones = || Tensor::filled(vec![d], 1.0);
            let zeros = || Tensor::zeros(vec![d]);
            let ln1_g = params.add(name("ln1_g"), ones());
            let ln1_b = params.add(name("ln1_b"), zeros());
            let wq = params.add(name("wq"), normal(&mut rng, vec![d, d], xavier(d, d)));
            let wk = params.add(name("wk"), normal(&mut rng, vec![d, d], xavier(d, d)));
            let wv = params.add(name("wv"), normal(&mut rng, vec![d, d], xavier(d, d)));
            let wo = params.add(name("wo"), normal(&mut rng, vec![d, d], xavier(d, d)));
            let ln2_g = params.add(name("ln2_g"), ones());
            let ln2_b = params.add(name("ln2_b"), zeros());
            let ff_w1 = params.add(name("ff_w1"), normal(&mut rng, vec![d, d], xavier(d, d)));
            let ff_b1 = params.add(name("ff_b1"), zeros());
            let ff_w2 = params.add(name("ff_w2"), normal(&mut rng, vec![d, d], xavier(d, d)));
            let ff_b2 = params.add(name("ff_b2"), zeros());
            let freq = (config.kind == ModelKind::Frequency).then(|| {
                (
                    params.add(
                        name("freq_alpha"),
                        Tensor::matrix(1, 1, vec![config.freq_alpha_init]).expect("shape"),
                    ),
                    params.add(
                        name("freq_beta"),
                        Tensor::matrix(1, 1, vec![config.freq_beta_init]).expect("shape"),
                    ),
                )
            });
            layers.push(LayerParams {
                ln1_g,
                ln1_b,
                wq,
                wk,
                wv,
                wo,
                ln2_g,
                ln2_b,
                ff_w1,
                ff_b1,
                ff_w2,
                ff_b2,
                freq,
            });
        }
        let ln_g = params.add("ln_g", Tensor::filled(vec![d], 1.0));
        let ln_b = params.add("ln_b", Tensor::zeros(vec![d]));
        let fusion = config.use_sensory.then(|| {
            let ds = config.sensory_width();
            let mut frng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xf05e_0000_0000_0001);
            let w_s = params.add("fusion.w_s", normal(&mut frng, vec![ds, TEACHER_DIM], 1.0));
            let mut wf = normal(&mut frng, vec![d, d + ds], 0.1 / math::sqrt(ds as f64));
            for i in 0..d {
                let row = wf.row_mut(i);
                row[..d].iter_mut().for_each(|v| *v = 0.0);
                row[i] = 1.0;
            }
            let w_f = params.add("fusion.w_f", wf);
            FusionParams { w_s, w_f }
        });
        let freq_rows = if config.kind == ModelKind::Frequency {
            frequency::last_rows(config.max_len, config.freq_cutoff)
        } else {
            Vec::new()
        };
        Ok(Self {
            config,
            n_items,
            params,
            item_emb,
            pos_emb,
            mask_emb,
            layers,
            ln_g,
            ln_b,
            fusion,
            sensory,
            freq_rows,
        })
    }

    /// Replaces the parameters with a loaded set, matched by name and shape.
    pub fn load_params(&mut self, loaded: &ParamStore) -> Result<()> {
        let ids: Vec<ParamId> = self.params.ids().collect();
        for id in ids {
            let name = self.params.get(id).name.clone();
            let src = loaded
                .find(&name)
                .ok_or_else(|| Error::Config(alloc::format!("checkpoint lacks {name}")))?;
            let v = loaded.value(src);
            if v.shape() != self.params.value(id).shape() {
                return Err(Error::ShapeMismatch {
                    op: "checkpoint",
                    left: self.params.value(id).shape().to_vec(),
                    right: v.shape().to_vec(),
                });
            }
            *self.params.value_mut(id) = v.clone();
        }
        Ok(())
    }

    pub fn fusion(&self) -> Option<FusionParams> {
        self.fusion
    }

    pub fn item_embedding(&self) -> ParamId {
        self.item_emb
    }

    pub fn sensory(&self) -> Option<&Tensor> {
        self.sensory.as_ref()
    }

    pub fn sensory_mut(&mut self) -> Option<&mut Tensor> {
        self.sensory.as_mut()
    }

    fn check_item(&self, i: usize) -> Result<usize> {
        if i == 0 || i > self.n_items {
            Err(Error::UnknownItem(i))
        } else {
            Ok(i)
        }
    }

    fn dropout(&self, g: &mut Graph, x: Var, rng: &mut Option<&mut ChaCha8Rng>) -> Result<Var> {
        let p = self.config.dropout;
        let Some(rng) = rng.as_deref_mut() else { return Ok(x) };
        if p == 0.0 {
            return Ok(x);
        }
        let shape = g.value(x).shape().to_vec();
        let n: usize = shape.iter().product();
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let m = g.constant(Tensor::new(shape, mask)?);
        g.mul(x, m)
    }

    /// Final hidden states `[bsz * len, d]` for a padded batch of slots.
    /// Passing a generator turns on dropout.
    pub fn encode(&self, g: &mut Graph, slots: &[Slot], bsz: usize, mut rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let cfg = &self.config;
        if bsz == 0 || slots.len() % bsz != 0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "{} slots for batch {bsz}",
                slots.len()
            )));
        }
        let len = slots.len() / bsz;
        if len > cfg.max_len {
            return Err(Error::SequenceTooLong {
                len,
                max_len: cfg.max_len,
            });
        }
        if len == 0 {
            return Err(Error::EmptySequence);
        }

        // token table: one row per distinct item in the batch, then the mask row
        let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
        for s in slots {
            if let Slot::Item(i) = *s {
                self.check_item(i)?;
                rows.entry(i).or_insert(0);
            }
        }
        let uniq: Vec<usize> = rows.keys().copied().collect();
        for (r, i) in uniq.iter().enumerate() {
            rows.insert(*i, r);
        }
        let emb = g.param(self.item_emb);
        let v = g.gather(emb, &uniq, None)?;
        let v = self.dropout(g, v, &mut rng)?;
        let mut table = match (self.fusion, &self.sensory) {
            (Some(fp), Some(s)) => {
                let mut sd = Vec::with_capacity(uniq.len() * TEACHER_DIM);
                for &i in &uniq {
                    sd.extend_from_slice(s.row(i));
                }
                let sv = g.constant(Tensor::matrix(uniq.len(), TEACHER_DIM, sd)?);
                fuse(g, v, sv, fp)?
            }
            _ => v,
        };
        let mask_row = uniq.len();
        if let Some(m) = self.mask_emb {
            let mv = g.param(m);
            table = g.concat_rows(table, mv)?;
        }
        let mut tok_idx = Vec::with_capacity(slots.len());
        let mut pos_idx = Vec::with_capacity(slots.len());
        for (k, s) in slots.iter().enumerate() {
            let t = k % len;
            let pos = cfg.max_len - len + t;
            match *s {
                Slot::Pad => {
                    tok_idx.push(PAD);
                    pos_idx.push(PAD);
                }
                Slot::Item(i) => {
                    tok_idx.push(rows[&i]);
                    pos_idx.push(pos);
                }
                Slot::Mask => {
                    if self.mask_emb.is_none() {
                        return Err(Error::InvalidArgument(
                            "mask slot in a model without mask embedding".into(),
                        ));
                    }
                    tok_idx.push(mask_row);
                    pos_idx.push(pos);
                }
            }
        }
        let x = g.gather(table, &tok_idx, Some(PAD))?;
        let pe = g.param(self.pos_emb);
        let p = g.gather(pe, &pos_idx, Some(PAD))?;
        let mut x = g.add(x, p)?;

        let valid: Vec<bool> = slots.iter().map(|s| *s != Slot::Pad).collect();
        let freq = if cfg.kind == ModelKind::Frequency {
            let ids: Vec<usize> = slots
                .iter()
                .map(|s| if let Slot::Item(i) = *s { i } else { 0 })
                .collect();
            let vseq = g.gather(emb, &ids, Some(0))?;
            let (lo, hi) = frequency::prefix_mixing(&valid, len, &self.freq_rows);
            let lo = g.seq_mix(vseq, len, lo)?;
            let hi = g.seq_mix(vseq, len, hi)?;
            Some((lo, hi))
        } else {
            None
        };
        let mask = AttentionMask {
            batch: bsz,
            seq: len,
            heads: cfg.n_heads,
            causal: cfg.kind != ModelKind::Masked,
            key_valid: valid,
        };
        for lp in &self.layers {
            let (g1, b1) = (g.param(lp.ln1_g), g.param(lp.ln1_b));
            let h = g.layer_norm(x, g1, b1)?;
            let (wq, wk, wv, wo) = (g.param(lp.wq), g.param(lp.wk), g.param(lp.wv), g.param(lp.wo));
            let q = g.matmul(h, wq)?;
            let k = g.matmul(h, wk)?;
            let vv = g.matmul(h, wv)?;
            let a = g.attention(q, k, vv, mask.clone())?;
            let a = g.matmul(a, wo)?;
            let a = self.dropout(g, a, &mut rng)?;
            x = g.add(x, a)?;
            if let (Some((lo, hi)), Some((alpha, beta))) = (freq, lp.freq) {
                let (al, be) = (g.param(alpha), g.param(beta));
                let fl = g.mul(lo, al)?;
                let fh = g.mul(hi, be)?;
                let f = g.add(fl, fh)?;
                x = g.add(x, f)?;
            }
            let (g2, b2) = (g.param(lp.ln2_g), g.param(lp.ln2_b));
            let h = g.layer_norm(x, g2, b2)?;
            let (w1, c1, w2, c2) = (
                g.param(lp.ff_w1),
                g.param(lp.ff_b1),
                g.param(lp.ff_w2),
                g.param(lp.ff_b2),
            );
            let f = g.matmul(h, w1)?;
            let f = g.add(f, c1)?;
            let f = g.relu(f);
            let f = g.matmul(f, w2)?;
            let f = g.add(f, c2)?;
            let f = self.dropout(g, f, &mut rng)?;
            x = g.add(x, f)?;
        }
        let (lg, lb) = (g.param(self.ln_g), g.param(self.ln_b));
        g.layer_norm(x, lg, lb)
    }

    /// Frequency branch alone for one layer, `[bsz * len, d]`, as it is added
    /// after attention.
    pub fn frequency_branch(&self, g: &mut Graph, slots: &[Slot], bsz: usize, layer: usize) -> Result<Var> {
        let len = slots.len() / bsz;
        let (alpha, beta) = self.layers[layer]
            .freq
            .ok_or_else(|| Error::InvalidArgument("not a frequency model".into()))?;
        let ids: Vec<usize> = slots
            .iter()
            .map(|s| if let Slot::Item(i) = *s { i } else { 0 })
            .collect();
        let valid: Vec<bool> = slots.iter().map(|s| *s != Slot::Pad).collect();
        let emb = g.param(self.item_emb);
        let vseq = g.gather(emb, &ids, Some(0))?;
        let (lo, hi) = frequency::prefix_mixing(&valid, len, &self.freq_rows);
        let lo = g.seq_mix(vseq, len, lo)?;
        let hi = g.seq_mix(vseq, len, hi)?;
        let (al, be) = (g.param(alpha), g.param(beta));
        let fl = g.mul(lo, al)?;
        let fh = g.mul(hi, be)?;
        g.add(fl, fh)
    }

    /// Sets the frequency scales of one layer.
    pub fn set_frequency_scales(&mut self, layer: usize, alpha: f64, beta: f64) -> Result<()> {
        let (a, b) = self.layers[layer]
            .freq
            .ok_or_else(|| Error::InvalidArgument("not a frequency model".into()))?;
        self.params.value_mut(a).data_mut()[0] = alpha;
        self.params.value_mut(b).data_mut()[0] = beta;
        Ok(())
    }

    /// Builds one training batch from full item sequences.
    ///
    /// Causal and frequency kinds predict `seq[t+1]` from the prefix up to
    /// `t` with `n_negatives` uniform negatives (never the positive). The
    /// masked kind masks each slot independently, forcing at least one.
    pub fn make_sample(&self, seqs: &[&[usize]], rng: &mut ChaCha8Rng) -> Result<TrainSample> {
        let cfg = &self.config;
        let inputs: Vec<&[usize]> = seqs
            .iter()
            .map(|s| {
                let s = if cfg.kind == ModelKind::Masked {
                    *s
                } else {
                    &s[..s.len().saturating_sub(1)]
                };
                &s[s.len().saturating_sub(cfg.max_len)..]
            })
            .collect();
        let len = inputs.iter().map(|s| s.len()).max().unwrap_or(0);
        if len == 0 {
            return Err(Error::EmptySequence);
        }
        let bsz = seqs.len();
        let mut slots = vec![Slot::Pad; bsz * len];
        let mut targets = Vec::new();
        let mut negatives = Vec::new();
        for (b, (inp, full)) in inputs.iter().zip(seqs).enumerate() {
            let off = len - inp.len();
            for (t, &item) in inp.iter().enumerate() {
                slots[b * len + off + t] = Slot::Item(self.check_item(item)?);
            }
            match cfg.kind {
                ModelKind::Masked => {
                    let mut any = false;
                    let mut masked = vec![false; inp.len()];
                    for m in masked.iter_mut() {
                        *m = rng.random::<f64>() < cfg.mask_prob;
                        any |= *m;
                    }
                    if !any && !inp.is_empty() {
                        masked[rng.random_range(0..inp.len())] = true;
                    }
                    for (t, &m) in masked.iter().enumerate() {
                        if m {
                            slots[b * len + off + t] = Slot::Mask;
                            targets.push((b * len + off + t, inp[t]));
                        }
                    }
                }
                ModelKind::Causal | ModelKind::Frequency => {
                    let next = &full[full.len() - inp.len()..];
                    for (t, &pos) in next.iter().enumerate() {
                        let pos = self.check_item(pos)?;
                        targets.push((b * len + off + t, pos));
                        for _ in 0..cfg.n_negatives {
                            let r = rng.random_range(1..self.n_items);
                            negatives.push(if r >= pos { r + 1 } else { r });
                        }
                    }
                }
            }
        }
        Ok(TrainSample {
            bsz,
            len,
            slots,
            targets,
            negatives,
        })
    }

    /// Training loss of a prepared batch: sampled softmax over the positive
    /// and its negatives for the causal and frequency kinds, full-catalog
    /// softmax at masked slots for the masked kind. Output scores use the
    /// item embedding table (tied weights).
    pub fn loss(&self, g: &mut Graph, sample: &TrainSample, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        if sample.targets.is_empty() {
            return Err(Error::InvalidArgument("batch has no prediction targets".into()));
        }
        let h = self.encode(g, &sample.slots, sample.bsz, rng)?;
        let pos: Vec<usize> = sample.targets.iter().map(|t| t.0).collect();
        let hs = g.gather(h, &pos, None)?;
        let emb = g.param(self.item_emb);
        match self.config.kind {
            ModelKind::Masked => {
                let all: Vec<usize> = (1..=self.n_items).collect();
                let out = g.gather(emb, &all, None)?;
                let logits = g.matmul_t(hs, out)?;
                let labels: Vec<usize> = sample.targets.iter().map(|t| t.1 - 1).collect();
                g.softmax_cross_entropy(logits, &labels)
            }
            ModelKind::Causal | ModelKind::Frequency => {
                let k = self.config.n_negatives;
                let mut ids = Vec::with_capacity(sample.targets.len() * (k + 1));
                for (j, t) in sample.targets.iter().enumerate() {
                    ids.push(t.1);
                    ids.extend_from_slice(&sample.negatives[j * k..(j + 1) * k]);
                }
                let logits = g.select_dot(hs, emb, &ids, k + 1)?;
                let labels = vec![0; sample.targets.len()];
                g.softmax_cross_entropy(logits, &labels)
            }
        }
    }

    /// Left-padded inference slots: the last `max_len` items, or for the
    /// masked kind the last `max_len - 1` items followed by a mask slot.
    pub fn inference_slots(&self, histories: &[&[usize]]) -> Result<(Vec<Slot>, usize)> {
        let cfg = &self.config;
        let room = if cfg.kind == ModelKind::Masked {
            cfg.max_len - 1
        } else {
            cfg.max_len
        };
        let extra = usize::from(cfg.kind == ModelKind::Masked);
        let mut len = 0;
        for h in histories {
            if h.is_empty() {
                return Err(Error::EmptySequence);
            }
            len = len.max(h.len().min(room) + extra);
        }
        let mut slots = vec![Slot::Pad; histories.len() * len];
        for (b, h) in histories.iter().enumerate() {
            let h = &h[h.len().saturating_sub(room)..];
            let off = len - h.len() - extra;
            for (t, &i) in h.iter().enumerate() {
                slots[b * len + off + t] = Slot::Item(self.check_item(i)?);
            }
            if extra == 1 {
                slots[b * len + len - 1] = Slot::Mask;
            }
        }
        Ok((slots, len))
    }

    /// Scores of items `1..=n_items` (index `j` holds item `j + 1`) for each
    /// history, from the last slot's state against the item embeddings.
    pub fn score_batch(&self, histories: &[&[usize]]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(histories.len());
        for chunk in histories.chunks(256) {
            let (slots, len) = self.inference_slots(chunk)?;
            let mut g = Graph::new(&self.params);
            let h = self.encode(&mut g, &slots, chunk.len(), None)?;
            let last: Vec<usize> = (0..chunk.len()).map(|b| b * len + len - 1).collect();
            let hs = g.gather(h, &last, None)?;
            let states = g.value(hs);
            let emb = self.params.value(self.item_emb);
            for b in 0..chunk.len() {
                let s = states.row(b);
                out.push((1..=self.n_items).map(|j| crate::kernel::dot(s, emb.row(j))).collect());
            }
        }
        Ok(out)
    }

    pub fn score_all_items(&self, history: &[usize]) -> Result<Vec<f64>> {
        Ok(self.score_batch(&[history])?.pop().expect("one row"))
    }
}
