//! Wengert-list tape. Nodes are appended in evaluation order, so the node
//! index is already a topological order and [`Graph::backward`] is a single
//! reverse sweep that visits each node once.

use alloc::vec;
use alloc::vec::Vec;

use super::dft::dft_packed;
use super::params::{ParamId, ParamStore};
use super::tensor::{dot, matmul_nn, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};
use crate::math;

/// Additive pre-softmax bias for disallowed attention pairs.
pub const MASK_BIAS: f64 = -1e9;

const LN_EPS: f64 = 1e-5;

/// Handle to a node on a [`Graph`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Which query/key pairs may interact in [`Graph::attention`].
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMask {
    pub batch: usize,
    pub seq: usize,
    pub heads: usize,
    /// Query `i` may only see keys `j <= i`.
    pub causal: bool,
    /// `batch * seq` flags; `false` keys (padding) are hidden from every query.
    pub key_valid: Vec<bool>,
}

impl AttentionMask {
    fn allowed(&self, b: usize, i: usize, j: usize) -> bool {
        !(self.causal && j > i) && self.key_valid[b * self.seq + j]
    }
}

#[derive(Copy, Clone, Debug)]
enum Bcast {
    Full,
    Row,
    Col,
    Scalar,
}

enum Op {
    Constant,
    Param(ParamId),
    MatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    Add {
        a: Var,
        b: Var,
        bcast: Bcast,
    },
    Mul {
        a: Var,
        b: Var,
        bcast: Bcast,
    },
    Scale {
        x: Var,
        c: f64,
    },
    Concat {
        a: Var,
        b: Var,
    },
    ConcatRows {
        a: Var,
        b: Var,
    },
    SliceCols {
        x: Var,
        start: usize,
        end: usize,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
        pad: Option<usize>,
    },
    SegmentMean {
        x: Var,
        lengths: Vec<usize>,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Relu {
        x: Var,
    },
    Softmax {
        x: Var,
    },
    SoftmaxCe {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    L2Normalize {
        x: Var,
        norms: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        mask: AttentionMask,
        probs: Vec<f64>,
    },
    Dft {
        x: Var,
        seq: usize,
        inverse: bool,
    },
    SeqMix {
        x: Var,
        seq: usize,
        mats: Vec<f64>,
    },
    SelectDot {
        h: Var,
        table: Var,
        ids: Vec<usize>,
        width: usize,
    },
    Sum {
        x: Var,
    },
    Mean {
        x: Var,
    },
}

struct Node {
    value: Option<Tensor>,
    op: Op,
}

/// Per-parameter gradients produced by [`Graph::backward`].
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

/// A single forward pass recorded for differentiation.
///
/// Parameters are read through a shared borrow of the [`ParamStore`]; the
/// graph never copies them.
pub struct Graph<'p> {
    params: &'p ParamStore,
    param_vars: Vec<Option<Var>>,
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn bcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Bcast> {
    if a.shape() == b.shape() {
        Ok(Bcast::Full)
    } else if b.len() == 1 {
        Ok(Bcast::Scalar)
    } else if b.rows() == 1 && b.cols() == a.cols() {
        Ok(Bcast::Row)
    } else if b.cols() == 1 && b.rows() == a.rows() && b.shape().len() == a.shape().len() {
        Ok(Bcast::Col)
    } else {
        Err(shape_err(op, a, b))
    }
}

#[inline]
fn bidx(kind: Bcast, i: usize, cols: usize) -> usize {
    match kind {
        Bcast::Full => i,
        Bcast::Row => i % cols,
        Bcast::Col => i / cols,
        Bcast::Scalar => 0,
    }
}

fn acc(grads: &mut [Option<Tensor>], v: Var, t: Tensor) {
    match &mut grads[v.0] {
        Some(g) => g.add_assign(&t),
        slot @ None => *slot = Some(t),
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            param_vars: vec![None; params.len()],
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.value(*id),
            (None, _) => unreachable!("non-parameter node without value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(value.is_finite(), "non-finite forward value");
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// `a · b` (or `a · bᵀ` with [`Graph::matmul_t`]) on the matrix views.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() || tb.shape().len() != 2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut shape = ta.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let out = Tensor::new(shape, matmul_nn(ta.data(), tb.data(), m, k, n))?;
        Ok(self.push(out, Op::MatMul { a, b, trans_b: false }))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.cols() || tb.shape().len() != 2 {
            return Err(shape_err("matmul_t", ta, tb));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
        let out = Tensor::matrix(m, n, matmul_nt(ta.data(), tb.data(), m, k, n))?;
        Ok(self.push(out, Op::MatMul { a, b, trans_b: true }))
    }

    /// Elementwise sum; `b` may broadcast as a row, a column, or a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let bcast = bcast_kind("add", ta, tb)?;
        let cols = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + tb.data()[bidx(bcast, i, cols)])
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Add { a, b, bcast }))
    }

    /// Elementwise product with the same broadcasting rules as [`Graph::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let bcast = bcast_kind("mul", ta, tb)?;
        let cols = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x * tb.data()[bidx(bcast, i, cols)])
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Mul { a, b, bcast }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v * c).collect()).expect("same shape");
        self.push(out, Op::Scale { x, c })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    /// Concatenation along the last dimension.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(shape_err("concat", ta, tb));
        }
        let (r, ca, cb) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        let out = Tensor::matrix(r, ca + cb, data)?;
        Ok(self.push(out, Op::Concat { a, b }))
    }

    /// Stacks the rows of `b` under the rows of `a`.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.cols() {
            return Err(shape_err("concat_rows", ta, tb));
        }
        let mut data = ta.data().to_vec();
        data.extend_from_slice(tb.data());
        let out = Tensor::matrix(ta.rows() + tb.rows(), ta.cols(), data)?;
        Ok(self.push(out, Op::ConcatRows { a, b }))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        if start > end || end > t.cols() {
            return Err(Error::InvalidArgument(alloc::format!(
                "slice_cols {start}..{end} of {} columns",
                t.cols()
            )));
        }
        let mut data = Vec::with_capacity(t.rows() * (end - start));
        for i in 0..t.rows() {
            data.extend_from_slice(&t.row(i)[start..end]);
        }
        let out = Tensor::matrix(t.rows(), end - start, data)?;
        Ok(self.push(out, Op::SliceCols { x, start, end }))
    }

    /// Embedding-row lookup. Rows equal to `pad` come back as zeros and
    /// receive no gradient.
    pub fn gather(&mut self, table: Var, ids: &[usize], pad: Option<usize>) -> Result<Var> {
        let t = self.value(table);
        let (n, d) = (t.rows(), t.cols());
        let mut data = vec![0.0; ids.len() * d];
        for (r, &id) in ids.iter().enumerate() {
            if Some(id) == pad {
                continue;
            }
            if id >= n {
                return Err(Error::IndexOutOfRange {
                    op: "gather",
                    index: id,
                    len: n,
                });
            }
            data[r * d..(r + 1) * d].copy_from_slice(t.row(id));
        }
        let out = Tensor::matrix(ids.len(), d, data)?;
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
                pad,
            },
        ))
    }

    /// Mean over consecutive row segments; an empty segment yields zeros.
    pub fn segment_mean(&mut self, x: Var, lengths: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let total: usize = lengths.iter().sum();
        if total != t.rows() {
            return Err(Error::InvalidArgument(alloc::format!(
                "segment lengths sum to {total}, input has {} rows",
                t.rows()
            )));
        }
        let d = t.cols();
        let mut data = vec![0.0; lengths.len() * d];
        let mut start = 0;
        for (s, &len) in lengths.iter().enumerate() {
            if len > 0 {
                let out = &mut data[s * d..(s + 1) * d];
                for r in start..start + len {
                    for (o, v) in out.iter_mut().zip(t.row(r)) {
                        *o += v;
                    }
                }
                let inv = 1.0 / len as f64;
                out.iter_mut().for_each(|o| *o *= inv);
            }
            start += len;
        }
        let out = Tensor::matrix(lengths.len(), d, data)?;
        Ok(self.push(
            out,
            Op::SegmentMean {
                x,
                lengths: lengths.to_vec(),
            },
        ))
    }

    /// Row-wise layer normalization with learned gain and bias (length `cols`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (t, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let d = t.cols();
        if tg.len() != d || tb.len() != d {
            return Err(shape_err("layer_norm", t, tg));
        }
        let rows = t.rows();
        let mut xhat = vec![0.0; rows * d];
        let mut inv_std = vec![0.0; rows];
        let mut data = vec![0.0; rows * d];
        for i in 0..rows {
            let row = t.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / math::sqrt(var + LN_EPS);
            inv_std[i] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[i * d + j] = h;
                data[i * d + j] = tg.data()[j] * h + tb.data()[j];
            }
        }
        let out = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v.max(0.0)).collect()).expect("same shape");
        self.push(out, Op::Relu { x })
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let d = t.cols();
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(d) {
            softmax_in_place(row);
        }
        let out = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Softmax { x })
    }

    /// Mean over rows of `-log softmax(logits)[target]`; returns a scalar.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let (rows, cols) = (t.rows(), t.cols());
        if targets.len() != rows || rows == 0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "{} targets for {rows} logit rows",
                targets.len()
            )));
        }
        let mut probs = t.data().to_vec();
        let mut loss = 0.0;
        for (i, &tgt) in targets.iter().enumerate() {
            if tgt >= cols {
                return Err(Error::IndexOutOfRange {
                    op: "softmax_cross_entropy",
                    index: tgt,
                    len: cols,
                });
            }
            let row = &mut probs[i * cols..(i + 1) * cols];
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + math::ln(row.iter().map(|v| math::exp(v - max)).sum::<f64>());
            loss += lse - row[tgt];
            for v in row.iter_mut() {
                *v = math::exp(*v - lse);
            }
        }
        let out = Tensor::scalar(loss / rows as f64);
        Ok(self.push(
            out,
            Op::SoftmaxCe {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Row-wise `x / ‖x‖₂`; all-zero rows stay zero.
    pub fn l2_normalize(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let d = t.cols();
        let mut data = t.data().to_vec();
        let mut norms = Vec::with_capacity(t.rows());
        for row in data.chunks_mut(d) {
            let n = math::sqrt(dot(row, row));
            norms.push(n);
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        let out = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::L2Normalize { x, norms })
    }

    /// Multi-head scaled dot-product attention over `[batch*seq, d]` inputs.
    ///
    /// A query that may see no key at all (e.g. a padded slot under a causal
    /// mask) gets a zero output row instead of a softmax over pure bias.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, mask: AttentionMask) -> Result<Var> {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        let d = tq.cols();
        let (bsz, l, h) = (mask.batch, mask.seq, mask.heads);
        if tk.shape() != tq.shape() || tv.shape() != tq.shape() || tq.rows() != bsz * l {
            return Err(shape_err("attention", tq, tk));
        }
        if h == 0 || d % h != 0 || mask.key_valid.len() != bsz * l {
            return Err(Error::InvalidArgument(alloc::format!(
                "attention: {h} heads for width {d}, {} key flags",
                mask.key_valid.len()
            )));
        }
        let dh = d / h;
        let scale = 1.0 / math::sqrt(dh as f64);
        let mut probs = vec![0.0; bsz * h * l * l];
        let mut out = vec![0.0; bsz * l * d];
        for b in 0..bsz {
            for hd in 0..h {
                let c0 = hd * dh;
                for i in 0..l {
                    let qi = &tq.row(b * l + i)[c0..c0 + dh];
                    let p = &mut probs[((b * h + hd) * l + i) * l..((b * h + hd) * l + i + 1) * l];
                    if !(0..l).any(|j| mask.allowed(b, i, j)) {
                        // nothing visible: leave the row and its output at zero
                        continue;
                    }
                    for (j, pj) in p.iter_mut().enumerate() {
                        let kj = &tk.row(b * l + j)[c0..c0 + dh];
                        let bias = if mask.allowed(b, i, j) { 0.0 } else { MASK_BIAS };
                        *pj = dot(qi, kj) * scale + bias;
                    }
                    softmax_in_place(p);
                    let o = &mut out[(b * l + i) * d + c0..(b * l + i) * d + c0 + dh];
                    for (j, &pj) in p.iter().enumerate() {
                        if pj == 0.0 {
                            continue;
                        }
                        let vj = &tv.row(b * l + j)[c0..c0 + dh];
                        for (ov, vv) in o.iter_mut().zip(vj) {
                            *ov += pj * vv;
                        }
                    }
                }
            }
        }
        let out = Tensor::new(tq.shape().to_vec(), out)?;
        Ok(self.push(out, Op::Attention { q, k, v, mask, probs }))
    }

    /// Discrete Fourier transform along the sequence axis.
    ///
    /// Input and output are packed complex rows `[batch*seq, 2d]`: the first
    /// `d` columns hold real parts, the last `d` imaginary parts. The inverse
    /// carries the `1/seq` factor.
    pub fn dft(&mut self, x: Var, seq: usize, inverse: bool) -> Result<Var> {
        let t = self.value(x);
        if seq == 0 || t.rows() % seq != 0 || t.cols() % 2 != 0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "dft: shape {:?} with sequence length {seq}",
                t.shape()
            )));
        }
        let (sign, scale) = if inverse { (1.0, 1.0 / seq as f64) } else { (-1.0, 1.0) };
        let data = dft_packed(t.data(), t.rows(), t.cols(), seq, sign, scale);
        let out = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Dft { x, seq, inverse }))
    }

    /// Per-sequence constant mixing along time:
    /// `y[b,t] = Σ_s mats[b][t][s] · x[b,s]`, `mats` laid out `[batch, seq, seq]`.
    pub fn seq_mix(&mut self, x: Var, seq: usize, mats: Vec<f64>) -> Result<Var> {
        let t = self.value(x);
        if seq == 0 || t.rows() % seq != 0 || mats.len() != (t.rows() / seq) * seq * seq {
            return Err(Error::InvalidArgument(alloc::format!(
                "seq_mix: {} mixing entries for shape {:?}, seq {seq}",
                mats.len(),
                t.shape()
            )));
        }
        let d = t.cols();
        let bsz = t.rows() / seq;
        let mut data = vec![0.0; t.len()];
        for b in 0..bsz {
            let m = &mats[b * seq * seq..(b + 1) * seq * seq];
            let xb = &t.data()[b * seq * d..(b + 1) * seq * d];
            let yb = matmul_nn(m, xb, seq, seq, d);
            data[b * seq * d..(b + 1) * seq * d].copy_from_slice(&yb);
        }
        let out = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(out, Op::SeqMix { x, seq, mats }))
    }

    /// Row-wise dot products against selected table rows:
    /// `out[p, j] = h[p] · table[ids[p*width + j]]`.
    pub fn select_dot(&mut self, h: Var, table: Var, ids: &[usize], width: usize) -> Result<Var> {
        let (th, tt) = (self.value(h), self.value(table));
        let p = th.rows();
        if th.cols() != tt.cols() || ids.len() != p * width {
            return Err(shape_err("select_dot", th, tt));
        }
        let mut data = vec![0.0; p * width];
        for i in 0..p {
            for j in 0..width {
                let id = ids[i * width + j];
                if id >= tt.rows() {
                    return Err(Error::IndexOutOfRange {
                        op: "select_dot",
                        index: id,
                        len: tt.rows(),
                    });
                }
                data[i * width + j] = dot(th.row(i), tt.row(id));
            }
        }
        let out = Tensor::matrix(p, width, data)?;
        Ok(self.push(
            out,
            Op::SelectDot {
                h,
                table,
                ids: ids.to_vec(),
                width,
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { x })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        self.push(Tensor::scalar(s), Op::Mean { x })
    }

    /// Reverse sweep from a scalar `loss`; returns gradients for every
    /// parameter that the loss depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.0] = Some(Tensor::filled(lv.shape().to_vec(), 1.0));
        let mut out = Gradients {
            grads: vec![None; self.params.len()],
        };

        for idx in (0..n).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let gd = g.data();
            match &self.nodes[idx].op {
                Op::Constant => {}
                Op::Param(id) => match &mut out.grads[id.0] {
                    Some(t) => t.add_assign(&g),
                    slot @ None => *slot = Some(g),
                },
                Op::MatMul { a, b, trans_b } => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k) = (ta.rows(), ta.cols());
                    if *trans_b {
                        let n = tb.rows();
                        // C = A Bᵀ: dA = G B, dB = Gᵀ A
                        let ga = matmul_nn(gd, tb.data(), m, n, k);
                        let gb = matmul_tn(gd, ta.data(), m, n, k);
                        acc(&mut grads, *a, Tensor::new(ta.shape().to_vec(), ga)?);
                        acc(&mut grads, *b, Tensor::new(tb.shape().to_vec(), gb)?);
                    } else {
                        let n = tb.cols();
                        let ga = matmul_nt(gd, tb.data(), m, n, k);
                        let gb = matmul_tn(ta.data(), gd, m, k, n);
                        acc(&mut grads, *a, Tensor::new(ta.shape().to_vec(), ga)?);
                        acc(&mut grads, *b, Tensor::new(tb.shape().to_vec(), gb)?);
                    }
                }
                Op::Add { a, b, bcast } => {
                    let tb = self.value(*b);
                    let cols = g.cols();
                    let mut gb = vec![0.0; tb.len()];
                    for (i, v) in gd.iter().enumerate() {
                        gb[bidx(*bcast, i, cols)] += v;
                    }
                    let gb = Tensor::new(tb.shape().to_vec(), gb)?;
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *b, gb);
                }
                Op::Mul { a, b, bcast } => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let cols = g.cols();
                    let mut ga = vec![0.0; ta.len()];
                    let mut gb = vec![0.0; tb.len()];
                    for (i, v) in gd.iter().enumerate() {
                        let j = bidx(*bcast, i, cols);
                        ga[i] = v * tb.data()[j];
                        gb[j] += v * ta.data()[i];
                    }
                    acc(&mut grads, *a, Tensor::new(ta.shape().to_vec(), ga)?);
                    acc(&mut grads, *b, Tensor::new(tb.shape().to_vec(), gb)?);
                }
                Op::Scale { x, c } => {
                    let gx = Tensor::new(g.shape().to_vec(), gd.iter().map(|v| v * c).collect())?;
                    acc(&mut grads, *x, gx);
                }
                Op::Concat { a, b } => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (ca, cb) = (ta.cols(), tb.cols());
                    let mut ga = Vec::with_capacity(ta.len());
                    let mut gb = Vec::with_capacity(tb.len());
                    for row in gd.chunks(ca + cb) {
                        ga.extend_from_slice(&row[..ca]);
                        gb.extend_from_slice(&row[ca..]);
                    }
                    acc(&mut grads, *a, Tensor::new(ta.shape().to_vec(), ga)?);
                    acc(&mut grads, *b, Tensor::new(tb.shape().to_vec(), gb)?);
                }
                Op::ConcatRows { a, b } => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let split = ta.len();
                    acc(&mut grads, *a, Tensor::new(ta.shape().to_vec(), gd[..split].to_vec())?);
                    acc(&mut grads, *b, Tensor::new(tb.shape().to_vec(), gd[split..].to_vec())?);
                }
                Op::SliceCols { x, start, end } => {
                    let tx = self.value(*x);
                    let c = tx.cols();
                    let w = end - start;
                    let mut gx = vec![0.0; tx.len()];
                    for (i, row) in gd.chunks(w).enumerate() {
                        gx[i * c + start..i * c + end].copy_from_slice(row);
                    }
                    acc(&mut grads, *x, Tensor::new(tx.shape().to_vec(), gx)?);
                }
                Op::Gather { table, ids, pad } => {
                    let tt = self.value(*table);
                    let d = tt.cols();
                    let mut gt = vec![0.0; tt.len()];
                    for (r, &id) in ids.iter().enumerate() {
                        if Some(id) == *pad {
                            continue;
                        }
                        let dst = &mut gt[id * d..(id + 1) * d];
                        for (o, v) in dst.iter_mut().zip(&gd[r * d..(r + 1) * d]) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *table, Tensor::new(tt.shape().to_vec(), gt)?);
                }
                Op::SegmentMean { x, lengths } => {
                    let tx = self.value(*x);
                    let d = tx.cols();
                    let mut gx = vec![0.0; tx.len()];
                    let mut start = 0;
                    for (s, &len) in lengths.iter().enumerate() {
                        if len > 0 {
                            let inv = 1.0 / len as f64;
                            let gs = &gd[s * d..(s + 1) * d];
                            for r in start..start + len {
                                for (o, v) in gx[r * d..(r + 1) * d].iter_mut().zip(gs) {
                                    *o = v * inv;
                                }
                            }
                        }
                        start += len;
                    }
                    acc(&mut grads, *x, Tensor::new(tx.shape().to_vec(), gx)?);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let (tx, tg, tb) = (self.value(*x), self.value(*gamma), self.value(*beta));
                    let d = tx.cols();
                    let mut gx = vec![0.0; tx.len()];
                    let mut gg = vec![0.0; tg.len()];
                    let mut gbeta = vec![0.0; tb.len()];
                    for i in 0..tx.rows() {
                        let go = &gd[i * d..(i + 1) * d];
                        let xh = &xhat[i * d..(i + 1) * d];
                        let mut sum_dxh = 0.0;
                        let mut sum_dxh_xh = 0.0;
                        for j in 0..d {
                            gg[j] += go[j] * xh[j];
                            gbeta[j] += go[j];
                            let dxh = go[j] * tg.data()[j];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xh[j];
                        }
                        let f = inv_std[i] / d as f64;
                        for j in 0..d {
                            let dxh = go[j] * tg.data()[j];
                            gx[i * d + j] = f * (d as f64 * dxh - sum_dxh - xh[j] * sum_dxh_xh);
                        }
                    }
                    acc(&mut grads, *x, Tensor::new(tx.shape().to_vec(), gx)?);
                    acc(&mut grads, *gamma, Tensor::new(tg.shape().to_vec(), gg)?);
                    acc(&mut grads, *beta, Tensor::new(tb.shape().to_vec(), gbeta)?);
                }
                Op::Relu { x } => {
                    let tx = self.value(*x);
                    let gx = tx
                        .data()
                        .iter()
                        .zip(gd)
                        .map(|(xv, gv)| if *xv > 0.0 { *gv } else { 0.0 })
                        .collect();
                    acc(&mut grads, *x, Tensor::new(tx.shape().to_vec(), gx)?);
                }
                Op::Softmax { x } => {
                    let y = self.nodes[idx].value.as_ref().expect("softmax value");
                    let d = y.cols();
                    let mut gx = vec![0.0; y.len()];
                    for i in 0..y.rows() {
                        let yr = y.row(i);
                        let gr = &gd[i * d..(i + 1) * d];
                        let s = dot(yr, gr);
                        for j in 0..d {
                            gx[i * d + j] = yr[j] * (gr[j] - s);
                        }
                    }
                    acc(&mut grads, *x, Tensor::new(y.shape().to_vec(), gx)?);
                }
                Op::SoftmaxCe { logits, targets, probs } => {
                    let tl = self.value(*logits);
                    let cols = tl.cols();
                    let f = gd[0] / targets.len() as f64;
                    let mut gx: Vec<f64> = probs.iter().map(|p| p * f).collect();
                    for (i, &t) in targets.iter().enumerate() {
                        gx[i * cols + t] -= f;
                    }
                    acc(&mut grads, *logits, Tensor::new(tl.shape().to_vec(), gx)?);
                }
                Op::L2Normalize { x, norms } => {
                    let y = self.nodes[idx].value.as_ref().expect("normalize value");
                    let d = y.cols();
                    let mut gx = vec![0.0; y.len()];
                    for (i, &n) in norms.iter().enumerate() {
                        if n == 0.0 {
                            continue;
                        }
                        let yr = y.row(i);
                        let gr = &gd[i * d..(i + 1) * d];
                        let s = dot(yr, gr);
                        for j in 0..d {
                            gx[i * d + j] = (gr[j] - yr[j] * s) / n;
                        }
                    }
                    acc(&mut grads, *x, Tensor::new(y.shape().to_vec(), gx)?);
                }
                Op::Attention { q, k, v, mask, probs } => {
                    let (tq, tk, tv) = (self.value(*q), self.value(*k), self.value(*v));
                    let d = tq.cols();
                    let (bsz, l, h) = (mask.batch, mask.seq, mask.heads);
                    let dh = d / h;
                    let scale = 1.0 / math::sqrt(dh as f64);
                    let mut gq = vec![0.0; tq.len()];
                    let mut gk = vec![0.0; tk.len()];
                    let mut gv = vec![0.0; tv.len()];
                    let mut dp = vec![0.0; l];
                    for b in 0..bsz {
                        for hd in 0..h {
                            let c0 = hd * dh;
                            for i in 0..l {
                                let gi = &gd[(b * l + i) * d + c0..(b * l + i) * d + c0 + dh];
                                let p = &probs[((b * h + hd) * l + i) * l..((b * h + hd) * l + i + 1) * l];
                                let mut s = 0.0;
                                for j in 0..l {
                                    let vj = &tv.row(b * l + j)[c0..c0 + dh];
                                    dp[j] = dot(gi, vj);
                                    s += p[j] * dp[j];
                                    if p[j] != 0.0 {
                                        let gvj = &mut gv[(b * l + j) * d + c0..(b * l + j) * d + c0 + dh];
                                        for (o, gg) in gvj.iter_mut().zip(gi) {
                                            *o += p[j] * gg;
                                        }
                                    }
                                }
                                let qi = &tq.row(b * l + i)[c0..c0 + dh];
                                for j in 0..l {
                                    let ds = p[j] * (dp[j] - s) * scale;
                                    if ds == 0.0 {
                                        continue;
                                    }
                                    let kj = &tk.row(b * l + j)[c0..c0 + dh];
                                    let gqi = &mut gq[(b * l + i) * d + c0..(b * l + i) * d + c0 + dh];
                                    for (o, kv) in gqi.iter_mut().zip(kj) {
                                        *o += ds * kv;
                                    }
                                    let gkj = &mut gk[(b * l + j) * d + c0..(b * l + j) * d + c0 + dh];
                                    for (o, qv) in gkj.iter_mut().zip(qi) {
                                        *o += ds * qv;
                                    }
                                }
                            }
                        }
                    }
                    acc(&mut grads, *q, Tensor::new(tq.shape().to_vec(), gq)?);
                    acc(&mut grads, *k, Tensor::new(tk.shape().to_vec(), gk)?);
                    acc(&mut grads, *v, Tensor::new(tv.shape().to_vec(), gv)?);
                }
                Op::Dft { x, seq, inverse } => {
                    let tx = self.value(*x);
                    // transpose of the real-linear map: conjugate transform, same scale
                    let (sign, scale) = if *inverse {
                        (-1.0, 1.0 / *seq as f64)
                    } else {
                        (1.0, 1.0)
                    };
                    let gx = dft_packed(gd, tx.rows(), tx.cols(), *seq, sign, scale);
                    acc(&mut grads, *x, Tensor::new(tx.shape().to_vec(), gx)?);
                }
                Op::SeqMix { x, seq, mats } => {
                    let tx = self.value(*x);
                    let (l, d) = (*seq, tx.cols());
                    let mut gx = vec![0.0; tx.len()];
                    for b in 0..tx.rows() / l {
                        let m = &mats[b * l * l..(b + 1) * l * l];
                        let gb = matmul_tn(m, &gd[b * l * d..(b + 1) * l * d], l, l, d);
                        gx[b * l * d..(b + 1) * l * d].copy_from_slice(&gb);
                    }
                    acc(&mut grads, *x, Tensor::new(tx.shape().to_vec(), gx)?);
                }
                Op::SelectDot { h, table, ids, width } => {
                    let (th, tt) = (self.value(*h), self.value(*table));
                    let d = th.cols();
                    let mut gh = vec![0.0; th.len()];
                    let mut gt = vec![0.0; tt.len()];
                    for i in 0..th.rows() {
                        let hi = th.row(i);
                        for j in 0..*width {
                            let gv = gd[i * width + j];
                            if gv == 0.0 {
                                continue;
                            }
                            let id = ids[i * width + j];
                            let trow = tt.row(id);
                            for c in 0..d {
                                gh[i * d + c] += gv * trow[c];
                                gt[id * d + c] += gv * hi[c];
                            }
                        }
                    }
                    acc(&mut grads, *h, Tensor::new(th.shape().to_vec(), gh)?);
                    acc(&mut grads, *table, Tensor::new(tt.shape().to_vec(), gt)?);
                }
                Op::Sum { x } => {
                    let tx = self.value(*x);
                    acc(&mut grads, *x, Tensor::filled(tx.shape().to_vec(), gd[0]));
                }
                Op::Mean { x } => {
                    let tx = self.value(*x);
                    let v = gd[0] / tx.len().max(1) as f64;
                    acc(&mut grads, *x, Tensor::filled(tx.shape().to_vec(), v));
                }
            }
        }
        Ok(out)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = math::exp(*v - max);
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}
