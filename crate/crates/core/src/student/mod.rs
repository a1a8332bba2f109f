//! Text-to-sensory-vector student: a hashing tokenizer, a mean-pooled
//! embedding encoder with a two-layer head, the regression + InfoNCE
//! distillation objective, and export of the per-item embedding table.

mod table;
mod tokenizer;

pub use table::SensoryEmbeddingTable;
pub use tokenizer::HashTokenizer;

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{dot, AdamState, Graph, ParamId, ParamStore, Tensor, Var};
use crate::math;
use crate::schema::ItemText;

/// Width of teacher targets and student outputs.
pub const TEACHER_DIM: usize = 768;

/// A stored teacher vector for one item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherTarget {
    pub item_id: String,
    pub z: Vec<f64>,
}

impl TeacherTarget {
    pub fn check(&self) -> Result<()> {
        if self.z.len() != TEACHER_DIM {
            return Err(Error::ShapeMismatch {
                op: "teacher target",
                left: vec![TEACHER_DIM],
                right: vec![self.z.len()],
            });
        }
        if !self.z.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "teacher target for {:?} has non-finite entries",
                self.item_id
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudentConfig {
    pub vocab: usize,
    pub hidden: usize,
    pub max_tokens: usize,
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            vocab: 1 << 15,
            hidden: 64,
            max_tokens: 256,
        }
    }
}

impl StudentConfig {
    pub fn tokenizer(&self) -> HashTokenizer {
        HashTokenizer::new(self.vocab, self.max_tokens)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    /// Weight of the contrastive term.
    pub lambda: f64,
    /// InfoNCE temperature.
    pub tau: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            tau: 0.07,
            batch_size: 64,
            lr: 3e-3,
            epochs: 60,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::NonPositiveTemperature(self.tau));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(alloc::format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Hash embeddings, mean pool, then `h → h` ReLU and `h → 768`.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentModel {
    pub config: StudentConfig,
    pub params: ParamStore,
    emb: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

fn normal_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, std: f64) -> Tensor {
    let n = shape.iter().product();
    let dist = Normal::new(0.0, std).expect("finite std");
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect()).expect("shape")
}

impl StudentModel {
    pub fn new(config: StudentConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden;
        let mut params = ParamStore::new();
        let emb = params.add(
            "student.emb",
            normal_tensor(&mut rng, vec![config.vocab, h], 1.0 / math::sqrt(h as f64)),
        );
        let w1 = params.add(
            "student.w1",
            normal_tensor(&mut rng, vec![h, h], math::sqrt(2.0 / h as f64)),
        );
        let b1 = params.add("student.b1", Tensor::zeros(vec![h]));
        let w2 = params.add(
            "student.w2",
            normal_tensor(&mut rng, vec![h, TEACHER_DIM], 1.0 / math::sqrt(h as f64)),
        );
        let b2 = params.add("student.b2", Tensor::zeros(vec![TEACHER_DIM]));
        Self {
            config,
            params,
            emb,
            w1,
            b1,
            w2,
            b2,
        }
    }

    /// Rebuilds a model around loaded parameters, checking names and shapes.
    pub fn from_params(config: StudentConfig, params: ParamStore) -> Result<Self> {
        let fresh = Self::new(config.clone(), 0);
        let mut ids = Vec::new();
        for (_, p) in fresh.params.iter() {
            let id = params
                .find(&p.name)
                .ok_or_else(|| Error::Config(alloc::format!("checkpoint lacks {}", p.name)))?;
            if params.value(id).shape() != p.value.shape() {
                return Err(Error::ShapeMismatch {
                    op: "student checkpoint",
                    left: p.value.shape().to_vec(),
                    right: params.value(id).shape().to_vec(),
                });
            }
            ids.push(id);
        }
        Ok(Self {
            config,
            params,
            emb: ids[0],
            w1: ids[1],
            b1: ids[2],
            w2: ids[3],
            b2: ids[4],
        })
    }

    /// Raw (unnormalized) outputs `[B, 768]` for a batch of token sequences.
    pub fn forward(&self, g: &mut Graph, seqs: &[&[usize]]) -> Result<Var> {
        let flat: Vec<usize> = seqs.iter().flat_map(|s| s.iter().copied()).collect();
        let lengths: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        let emb = g.param(self.emb);
        let tok = g.gather(emb, &flat, None)?;
        let pooled = g.segment_mean(tok, &lengths)?;
        let (w1, b1, w2, b2) = (g.param(self.w1), g.param(self.b1), g.param(self.w2), g.param(self.b2));
        let h = g.matmul(pooled, w1)?;
        let h = g.add(h, b1)?;
        let h = g.relu(h);
        let o = g.matmul(h, w2)?;
        g.add(o, b2)
    }

    /// L2-normalized outputs, one row per sequence.
    pub fn embed(&self, seqs: &[&[usize]]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(256) {
            let mut g = Graph::new(&self.params);
            let o = self.forward(&mut g, chunk)?;
            let n = g.l2_normalize(o);
            let t = g.value(n);
            for i in 0..t.rows() {
                out.push(t.row(i).to_vec());
            }
        }
        Ok(out)
    }
}

/// Distillation objective on a graph: both sides L2-normalized, then the mean over
/// rows of `‖f − z‖² + λ · InfoNCE`, with the other rows of the batch as
/// negatives.
pub fn distill_loss_graph(g: &mut Graph, student_out: Var, targets: Var, lambda: f64, tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::NonPositiveTemperature(tau));
    }
    let (so, tt) = (g.value(student_out), g.value(targets));
    if so.shape() != tt.shape() || so.rows() == 0 {
        return Err(Error::ShapeMismatch {
            op: "distill_loss",
            left: so.shape().to_vec(),
            right: tt.shape().to_vec(),
        });
    }
    let b = so.rows();
    let f = g.l2_normalize(student_out);
    let z = g.l2_normalize(targets);
    let diff = g.sub(f, z)?;
    let sq = g.mul(diff, diff)?;
    let reg = g.sum(sq);
    let reg = g.scale(reg, 1.0 / b as f64);
    if lambda == 0.0 {
        return Ok(reg);
    }
    let sims = g.matmul_t(f, z)?;
    let logits = g.scale(sims, 1.0 / tau);
    let labels: Vec<usize> = (0..b).collect();
    let nce = g.softmax_cross_entropy(logits, &labels)?;
    let nce = g.scale(nce, lambda);
    g.add(reg, nce)
}

/// [`distill_loss_graph`] on plain tensors.
pub fn distill_loss(student_out: &Tensor, targets: &Tensor, lambda: f64, tau: f64) -> Result<f64> {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let (s, t) = (g.constant(student_out.clone()), g.constant(targets.clone()));
    let l = distill_loss_graph(&mut g, s, t, lambda, tau)?;
    Ok(g.value(l).item())
}

/// A tokenized item with its teacher vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentExample {
    pub item_id: String,
    pub tokens: Vec<usize>,
    pub target: Vec<f64>,
}

/// Tokenizes every text and attaches its target; a text without a target is
/// an error.
pub fn build_examples(
    texts: &[(String, ItemText)],
    targets: &[TeacherTarget],
    tok: &HashTokenizer,
) -> Result<Vec<StudentExample>> {
    let mut by_id = alloc::collections::BTreeMap::new();
    for t in targets {
        t.check()?;
        by_id.insert(t.item_id.as_str(), &t.z);
    }
    texts
        .iter()
        .map(|(id, text)| {
            let z = by_id.get(id.as_str()).ok_or_else(|| Error::MissingTarget(id.clone()))?;
            Ok(StudentExample {
                item_id: id.clone(),
                tokens: tok.encode_item(text),
                target: (*z).clone(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentEval {
    pub mse: f64,
    pub matched_cos: f64,
    /// Absent when fewer than two examples are evaluated.
    pub mismatched_cos: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: Option<StudentEval>,
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = math::sqrt(dot(v, v));
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Mean squared distance and cosines between normalized outputs and targets.
///
/// Mismatched pairs come from a seeded permutation `π` of the examples: the
/// partner of `π[k]` is `π[k+1]` (cyclically), so no example is paired with
/// itself.
pub fn eval_student(model: &StudentModel, examples: &[StudentExample], seed: u64) -> Result<StudentEval> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("no examples to evaluate".into()));
    }
    let seqs: Vec<&[usize]> = examples.iter().map(|e| e.tokens.as_slice()).collect();
    let outs = model.embed(&seqs)?;
    eval_outputs(&outs, examples, seed)
}

/// [`eval_student`] on precomputed normalized outputs.
pub fn eval_outputs(outs: &[Vec<f64>], examples: &[StudentExample], seed: u64) -> Result<StudentEval> {
    let n = examples.len();
    if outs.len() != n || n == 0 {
        return Err(Error::LengthMismatch(outs.len(), n));
    }
    let targets: Vec<Vec<f64>> = examples.iter().map(|e| normalized(&e.target)).collect();
    let (mut mse, mut matched) = (0.0, 0.0);
    for (f, z) in outs.iter().zip(&targets) {
        mse += f.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        matched += dot(f, z);
    }
    let mismatched_cos = (n >= 2).then(|| {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut s = 0.0;
        for k in 0..n {
            s += dot(&outs[perm[k]], &targets[perm[(k + 1) % n]]);
        }
        s / n as f64
    });
    Ok(StudentEval {
        mse: mse / n as f64,
        matched_cos: matched / n as f64,
        mismatched_cos,
    })
}

/// Adam training on shuffled mini-batches. Validation stats are logged per
/// epoch when `val` is non-empty.
pub fn train_student(
    train: &[StudentExample],
    val: &[StudentExample],
    model_cfg: StudentConfig,
    cfg: &DistillConfig,
) -> Result<(StudentModel, Vec<StudentEpoch>)> {
    cfg.check()?;
    let mut model = StudentModel::new(model_cfg, cfg.seed);
    let mut adam = AdamState::new(&model.params, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0001);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let seqs: Vec<&[usize]> = chunk.iter().map(|&i| train[i].tokens.as_slice()).collect();
            let mut tdata = Vec::with_capacity(chunk.len() * TEACHER_DIM);
            for &i in chunk {
                tdata.extend_from_slice(&train[i].target);
            }
            let grads = {
                let mut g = Graph::new(&model.params);
                let out = model.forward(&mut g, &seqs)?;
                let t = g.constant(Tensor::matrix(chunk.len(), TEACHER_DIM, tdata)?);
                let loss = distill_loss_graph(&mut g, out, t, cfg.lambda, cfg.tau)?;
                total += g.value(loss).item();
                g.backward(loss)?
            };
            batches += 1;
            model.params.zero_grad();
            model.params.accumulate(&grads);
            adam.step(&mut model.params);
        }
        let val_stats = if val.is_empty() {
            None
        } else {
            Some(eval_student(&model, val, cfg.seed)?)
        };
        history.push(StudentEpoch {
            epoch,
            train_loss: if batches == 0 { 0.0 } else { total / batches as f64 },
            val: val_stats,
        });
    }
    Ok((model, history))
}

/// Normalized student outputs for every catalog item as `f32` rows, keyed
/// and ordered by item id.
pub fn export_table(model: &StudentModel, catalog: &[(String, ItemText)]) -> Result<SensoryEmbeddingTable> {
    let mut seen = BTreeSet::new();
    for (id, _) in catalog {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateItem(id.clone()));
        }
    }
    let tok = model.config.tokenizer();
    let tokens: Vec<Vec<usize>> = catalog.iter().map(|(_, t)| tok.encode_item(t)).collect();
    let seqs: Vec<&[usize]> = tokens.iter().map(Vec::as_slice).collect();
    let outs = model.embed(&seqs)?;
    let rows = catalog
        .iter()
        .zip(outs)
        .map(|((id, _), v)| (id.clone(), v.into_iter().map(|x| x as f32).collect()))
        .collect();
    SensoryEmbeddingTable::from_rows(TEACHER_DIM, rows)
}

#[cfg(test)]
mod tests;
