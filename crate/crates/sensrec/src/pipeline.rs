//! The stages shared by the subcommands and the end-to-end pipeline.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sensrec_core::eval::{
    five_core_filter, generate_synthetic, leave_one_out_split, InteractionLog, MetricReport, Split, SyntheticWorld,
};
use sensrec_core::rec::{sensory_matrix, train_model, EpochLog, ModelKind};
use sensrec_core::schema::ItemText;
use sensrec_core::student::{
    build_examples, export_table, train_student, SensoryEmbeddingTable, StudentEpoch, StudentModel, TeacherTarget,
};

use crate::annotations::serialize_annotations;
use crate::binfmt::write_table;
use crate::config::{Manifest, RunConfig};
use crate::data::{read_targets, write_interactions, write_items, write_json, write_jsonl, write_targets};
use crate::models::{attach_markers, evaluate, save_recommender, save_student, Recommender};
use crate::report::{metrics_csv, metrics_text, MetricsJson};

/// Wraps a stage body so failures name the stage.
pub fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    eprintln!("[{name}]");
    f().with_context(|| format!("stage {name} failed"))
}

/// File names written by [`write_world`].
pub const INTERACTIONS: &str = "interactions.csv";
pub const ITEMS: &str = "items.jsonl";
pub const ANNOTATIONS: &str = "annotations.jsonl";
pub const TARGETS: &str = "targets.sens";

pub fn write_world(dir: &Path, w: &SyntheticWorld) -> Result<Vec<PathBuf>> {
    let p = |n: &str| dir.join(n);
    write_interactions(&p(INTERACTIONS), &w.log)?;
    write_items(&p(ITEMS), &w.texts)?;
    fs::write(p(ANNOTATIONS), serialize_annotations(&w.annotations))?;
    write_targets(&p(TARGETS), &w.targets)?;
    Ok(vec![p(INTERACTIONS), p(ITEMS), p(ANNOTATIONS), p(TARGETS)])
}

/// Trains the student on a seeded item split: `holdout` of the items
/// validate, the rest train.
pub fn distill(
    texts: &[(String, ItemText)],
    targets: &[TeacherTarget],
    cfg: &RunConfig,
) -> Result<(StudentModel, Vec<StudentEpoch>)> {
    let tok = cfg.student.tokenizer();
    let mut ex = build_examples(texts, targets, &tok)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd157_0000_0000_0003);
    ex.shuffle(&mut rng);
    let n_val = ((ex.len() as f64) * cfg.distill_holdout).round() as usize;
    let n_val = if cfg.distill_holdout > 0.0 {
        n_val.max(2).min(ex.len())
    } else {
        0
    };
    let (val, train) = ex.split_at(n_val);
    Ok(train_student(train, val, cfg.student.clone(), &cfg.distill)?)
}

pub fn embed(student: &StudentModel, texts: &[(String, ItemText)]) -> Result<SensoryEmbeddingTable> {
    Ok(export_table(student, texts)?)
}

/// 5-core filter then leave-one-out.
pub fn prepare_split(log: &InteractionLog) -> Split {
    let split = leave_one_out_split(&five_core_filter(log));
    for w in &split.warnings {
        eprintln!("warning: {w}");
    }
    split
}

pub fn train(
    split: &Split,
    cfg: &RunConfig,
    kind: ModelKind,
    table: Option<&SensoryEmbeddingTable>,
) -> Result<(Recommender, Vec<EpochLog>)> {
    let mcfg = cfg.model_for(kind, table.is_some());
    let sensory = table.map(|t| sensory_matrix(t, &split.items)).transpose()?;
    let (model, history) = train_model(&split.rec_data(), &mcfg, sensory)?;
    Ok((
        Recommender {
            model,
            items: split.items.clone(),
        },
        history,
    ))
}

/// Runs `jobs` on up to `threads` worker threads; results keep job order.
pub fn run_jobs<T: Send>(n: usize, threads: usize, job: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads.max(1).min(n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let r = job(i);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .unwrap()
                .unwrap_or_else(|| Err(anyhow!("job did not run")))
        })
        .collect()
}

pub fn stem(kind: ModelKind, sens: bool) -> String {
    format!("{}-{}", kind.as_str(), if sens { "sens" } else { "base" })
}

/// Writes `metrics.json`, `metrics.csv` and `metrics.txt`.
pub fn write_metrics(dir: &Path, reports: &[MetricReport]) -> Result<Vec<PathBuf>> {
    let json: Vec<MetricsJson> = reports.iter().map(MetricsJson::from).collect();
    let paths = [
        dir.join("metrics.json"),
        dir.join("metrics.csv"),
        dir.join("metrics.txt"),
    ];
    write_json(&paths[0], &json)?;
    fs::write(&paths[1], metrics_csv(reports))?;
    fs::write(&paths[2], metrics_text(reports))?;
    Ok(paths.to_vec())
}

/// Everything a pipeline run produced, for callers that want numbers
/// rather than files.
pub struct PipelineOutput {
    pub reports: Vec<MetricReport>,
    pub distill_log: Vec<StudentEpoch>,
    pub histories: Vec<Vec<EpochLog>>,
    pub manifest: Manifest,
}

/// synth → distill → embed → split → train Base and Sens per backbone →
/// evaluate → markers → reports and manifest.
pub fn run_pipeline(cfg: &RunConfig, out: &Path, threads: usize) -> Result<PipelineOutput> {
    fs::create_dir_all(out).with_context(|| format!("create {}", out.display()))?;
    let mut manifest = Manifest::new("pipeline", cfg, threads);
    let world = stage("synth", || {
        let w = generate_synthetic(&cfg.synth)?;
        for p in write_world(out, &w)? {
            manifest.output(&p)?;
        }
        Ok(w)
    })?;
    let (student, distill_log) = stage("distill", || {
        // train on the stored f32 targets so stepwise runs give the same student
        let targets = read_targets(&out.join(TARGETS))?;
        let (s, log) = distill(&world.texts, &targets, cfg)?;
        let p = out.join("student.ckpt");
        save_student(&p, &s)?;
        write_jsonl(&out.join("distill.jsonl"), &log)?;
        manifest.output(&p)?;
        if let Some(v) = log.last().and_then(|e| e.val.as_ref()) {
            eprintln!(
                "  student: mse {:.4} matched {:.3} mismatched {}",
                v.mse,
                v.matched_cos,
                v.mismatched_cos.map_or("n/a".into(), |m| format!("{m:.3}"))
            );
        }
        Ok((s, log))
    })?;
    let table = stage("embed", || {
        let t = embed(&student, &world.texts)?;
        let p = out.join("sensory.sens");
        write_table(&p, &t)?;
        manifest.output(&p)?;
        Ok(t)
    })?;
    let split = stage("split", || {
        let s = prepare_split(&world.log);
        eprintln!("  {} users, {} items", s.users.len(), s.n_items());
        Ok(s)
    })?;
    let jobs: Vec<(ModelKind, bool)> = cfg.kinds.iter().flat_map(|&k| [(k, false), (k, true)]).collect();
    let trained = stage("train", || {
        let r = run_jobs(jobs.len(), threads, |i| {
            let (kind, sens) = jobs[i];
            let (rec, hist) = train(&split, cfg, kind, sens.then_some(&table))?;
            eprintln!(
                "  {} done after {} epochs (best val NDCG@10 {:.4})",
                stem(kind, sens),
                hist.len(),
                hist.iter().map(|h| h.val_ndcg10).fold(0.0, f64::max)
            );
            Ok((rec, hist))
        })?;
        for ((kind, sens), (rec, hist)) in jobs.iter().zip(&r) {
            for p in save_recommender(out, &stem(*kind, *sens), rec, hist)? {
                manifest.output(&p)?;
            }
        }
        Ok(r)
    })?;
    let reports = stage("eval", || {
        let cases = split.test_cases();
        let mut reports = Vec::with_capacity(trained.len());
        for (rec, _) in &trained {
            reports.push(evaluate(rec, &cfg.domain, &cases, &cfg.eval.ks, threads)?);
        }
        attach_markers(&mut reports, cfg.eval.bootstrap_resamples, cfg.seed)?;
        Ok(reports)
    })?;
    stage("report", || {
        for p in write_metrics(out, &reports)? {
            manifest.output(&p)?;
        }
        write_json(&out.join("manifest.json"), &manifest)?;
        print!("{}", metrics_text(&reports));
        Ok(())
    })?;
    Ok(PipelineOutput {
        reports,
        distill_log,
        histories: trained.into_iter().map(|(_, h)| h).collect(),
        manifest,
    })
}
