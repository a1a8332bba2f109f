use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SeqModelConfig, SeqRecModel};
use crate::error::{Error, Result};
use crate::eval::{ndcg_at_k, rank_of};
use crate::kernel::{AdamState, Graph, Tensor};

/// Training input in 1-based item indices: full training sequences (each at
/// least two items long) and validation cases of (history, held-out item).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecData {
    pub n_items: usize,
    pub train: Vec<Vec<usize>>,
    pub valid: Vec<(Vec<usize>, usize)>,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_ndcg10: f64,
}

/// Mean NDCG@10 of the validation cases under full-catalog ranking.
pub fn validation_ndcg10(model: &SeqRecModel, valid: &[(Vec<usize>, usize)]) -> Result<f64> {
    if valid.is_empty() {
        return Ok(0.0);
    }
    let hist: Vec<&[usize]> = valid.iter().map(|v| v.0.as_slice()).collect();
    let scores = model.score_batch(&hist)?;
    let mut total = 0.0;
    for (s, (_, target)) in scores.iter().zip(valid) {
        if *target == 0 || *target > model.n_items {
            return Err(Error::UnknownItem(*target));
        }
        total += ndcg_at_k(rank_of(s, target - 1), 10)?;
    }
    Ok(total / valid.len() as f64)
}

/// Adam training with per-epoch validation NDCG@10 and early stopping: the
/// run halts once `patience` consecutive epochs fail to beat the best score,
/// and the best parameters are restored.
///
/// `sensory` must be given exactly when `cfg.use_sensory` is set; Base and
/// Sens runs otherwise go through the same batching, sampling and loss code.
pub fn train_model(
    data: &RecData,
    cfg: &SeqModelConfig,
    sensory: Option<Tensor>,
) -> Result<(SeqRecModel, Vec<EpochLog>)> {
    let mut model = SeqRecModel::new(cfg.clone(), data.n_items, sensory)?;
    let seqs: Vec<&[usize]> = data.train.iter().filter(|s| s.len() >= 2).map(Vec::as_slice).collect();
    if seqs.is_empty() {
        return Err(Error::InvalidArgument(
            "no training sequence has two or more items".into(),
        ));
    }
    let mut adam = AdamState::new(&model.params, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7a11_0000_0000_0002);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut history = Vec::new();
    let mut best = (f64::NEG_INFINITY, model.params.clone());
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&[usize]> = chunk.iter().map(|&i| seqs[i]).collect();
            let sample = model.make_sample(&batch, &mut rng)?;
            let grads = {
                let mut g = Graph::new(&model.params);
                let loss = model.loss(&mut g, &sample, Some(&mut rng))?;
                total += g.value(loss).item();
                g.backward(loss)?
            };
            batches += 1;
            model.params.zero_grad();
            model.params.accumulate(&grads);
            adam.step(&mut model.params);
        }
        let val = validation_ndcg10(&model, &data.valid)?;
        history.push(EpochLog {
            epoch,
            loss: total / batches as f64,
            val_ndcg10: val,
        });
        if val > best.0 {
            best = (val, model.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    if !history.is_empty() {
        model.params = best.1;
    }
    Ok((model, history))
}
