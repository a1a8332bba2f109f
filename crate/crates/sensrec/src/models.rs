//! Saving and loading trained models (checkpoint + JSON sidecar), and
//! threaded full-ranking evaluation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sensrec_core::eval::{rank_cases, MetricReport, Scorer};
use sensrec_core::rec::{sensory_matrix, EpochLog, SeqModelConfig, SeqRecModel};
use sensrec_core::student::{SensoryEmbeddingTable, StudentConfig, StudentModel};

use crate::binfmt::{read_params, sidecar_path, write_params};
use crate::data::{read_json, write_json, write_jsonl};

pub const SIDECAR_VERSION: u32 = 1;

/// JSON written next to every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Sidecar {
    Student {
        version: u32,
        config: StudentConfig,
    },
    Recommender {
        version: u32,
        config: SeqModelConfig,
        /// Item id of each 1-based catalog index.
        items: Vec<String>,
    },
}

pub fn save_student(path: &Path, model: &StudentModel) -> Result<()> {
    write_params(path, &model.params)?;
    write_json(
        &sidecar_path(path),
        &Sidecar::Student {
            version: SIDECAR_VERSION,
            config: model.config.clone(),
        },
    )
}

pub fn load_student(path: &Path) -> Result<StudentModel> {
    let Sidecar::Student { config, .. } = read_json(&sidecar_path(path))? else {
        bail!("{} is not a student checkpoint", path.display());
    };
    let params = read_params(path).with_context(|| format!("read {}", path.display()))?;
    Ok(StudentModel::from_params(config, params)?)
}

/// A recommender together with its catalog.
#[derive(Clone, Debug)]
pub struct Recommender {
    pub model: SeqRecModel,
    pub items: Vec<String>,
}

impl Recommender {
    pub fn setting(&self) -> &'static str {
        if self.model.config.use_sensory {
            "Sens"
        } else {
            "Base"
        }
    }

    pub fn label(&self) -> &'static str {
        self.model.config.kind.as_str()
    }
}

/// Writes `<stem>.ckpt`, `<stem>.json` and `<stem>.epochs.jsonl` and returns
/// the three paths.
pub fn save_recommender(dir: &Path, stem: &str, rec: &Recommender, history: &[EpochLog]) -> Result<[PathBuf; 3]> {
    let ckpt = dir.join(format!("{stem}.ckpt"));
    write_params(&ckpt, &rec.model.params)?;
    let side = sidecar_path(&ckpt);
    write_json(
        &side,
        &Sidecar::Recommender {
            version: SIDECAR_VERSION,
            config: rec.model.config.clone(),
            items: rec.items.clone(),
        },
    )?;
    let log = dir.join(format!("{stem}.epochs.jsonl"));
    write_jsonl(&log, history)?;
    Ok([ckpt, side, log])
}

/// Loads a recommender; Sens checkpoints need the sensory table they were
/// trained with.
pub fn load_recommender(path: &Path, table: Option<&SensoryEmbeddingTable>) -> Result<Recommender> {
    let Sidecar::Recommender { config, items, .. } = read_json(&sidecar_path(path))? else {
        bail!("{} is not a recommender checkpoint", path.display());
    };
    let sensory = match (config.use_sensory, table) {
        (false, _) => None,
        (true, Some(t)) => Some(sensory_matrix(t, &items)?),
        (true, None) => bail!("{} uses sensory embeddings; pass --table", path.display()),
    };
    let mut model = SeqRecModel::new(config, items.len(), sensory)?;
    let params = read_params(path).with_context(|| format!("read {}", path.display()))?;
    model.load_params(&params)?;
    Ok(Recommender { model, items })
}

/// 1-based ranks of each case, computed on up to `threads` threads over
/// contiguous shards and concatenated in case order.
pub fn rank_parallel<S: Scorer + Sync>(
    scorer: &S,
    cases: &[(Vec<usize>, usize)],
    threads: usize,
) -> Result<Vec<usize>> {
    let threads = threads.max(1).min(cases.len().max(1));
    if threads == 1 {
        return Ok(rank_cases(scorer, cases)?);
    }
    let shard = cases.len().div_ceil(threads);
    let parts: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = cases
            .chunks(shard)
            .map(|c| s.spawn(move || rank_cases(scorer, c)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("rank worker")).collect()
    });
    let mut ranks = Vec::with_capacity(cases.len());
    for p in parts {
        ranks.extend(p?);
    }
    Ok(ranks)
}

pub fn evaluate(
    rec: &Recommender,
    domain: &str,
    cases: &[(Vec<usize>, usize)],
    ks: &[usize],
    threads: usize,
) -> Result<MetricReport> {
    let ranks = rank_parallel(&rec.model, cases, threads)?;
    Ok(MetricReport::from_ranks(domain, rec.label(), rec.setting(), ranks, ks)?)
}

/// Marks every `Sens` report against the `Base` report of the same model.
pub fn attach_markers(reports: &mut [MetricReport], resamples: usize, seed: u64) -> Result<()> {
    for i in 0..reports.len() {
        if reports[i].setting != "Sens" {
            continue;
        }
        let base = reports
            .iter()
            .position(|b| b.setting == "Base" && b.model == reports[i].model && b.domain == reports[i].domain);
        if let Some(j) = base {
            let b = reports[j].clone();
            reports[i].mark_against(&b, resamples, seed)?;
        }
    }
    Ok(())
}
