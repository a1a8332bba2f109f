//! Command-line entry points.
//!
//! Exit codes: 0 success, 1 validation errors in the inputs, 2 runtime
//! failure (including bad arguments).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sensrec_core::alignment::{
    aggregate_audit, alignment_rows, default_value_similarity, AuditVotes, TaxonomyMap, SEMANTIC_THRESHOLDS,
};
use sensrec_core::eval::{explain, generate_synthetic};
use sensrec_core::rec::ModelKind;

use crate::annotations::{parse_annotations, serialize_issues, Parsed};
use crate::binfmt::{read_table, write_table};
use crate::config::{Manifest, RunConfig};
use crate::data::{read_interactions, read_items, read_jsonl, read_targets, write_json, write_jsonl};
use crate::models::{attach_markers, evaluate, load_recommender, load_student, save_recommender, save_student};
use crate::pipeline::{self, stage};
use crate::report::{alignment_csv, alignment_json, alignment_text, audit_text};

#[derive(Parser, Debug)]
#[command(
    name = "sensrec",
    version,
    about = "Sensory-embedding sequential recommendation toolkit"
)]
pub struct Cli {
    /// JSON run config (or a run manifest to replay).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Where outputs are written.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads for training jobs and evaluation shards.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check an annotation file; exits 1 when any record has an error.
    Validate {
        annotations: PathBuf,
        /// Also write canonical annotations and issues into the out dir.
        #[arg(long)]
        write: bool,
    },
    /// Agreement between predicted and reference annotations.
    Align {
        pred: PathBuf,
        reference: PathBuf,
        /// Semantic match thresholds.
        #[arg(long, value_delimiter = ',', default_values_t = SEMANTIC_THRESHOLDS.to_vec())]
        thresholds: Vec<f64>,
    },
    /// Majority-vote audit summary from three-annotator votes (JSONL).
    Audit { votes: PathBuf },
    /// Generate a synthetic world: interactions, item texts, annotations, teacher targets.
    Synth,
    /// Train the student encoder against teacher targets.
    Distill {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        targets: PathBuf,
    },
    /// Export the sensory embedding table from a trained student.
    Embed {
        #[arg(long)]
        student: PathBuf,
        #[arg(long)]
        items: PathBuf,
    },
    /// Train one recommender (Base, or Sens when --table is given).
    Train {
        /// Interaction CSV (user_id,item_id,timestamp) or Amazon reviews JSON
        #[arg(long)]
        interactions: PathBuf,
        /// causal, masked, or frequency
        #[arg(long, value_parser = parse_kind)]
        kind: ModelKind,
        /// Sensory table (.sens); trains the Sens variant
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Full-ranking evaluation of checkpoints; Sens runs are marked against
    /// the Base run of the same backbone.
    Eval {
        #[arg(long)]
        interactions: PathBuf,
        /// Repeatable
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        /// Needed when any checkpoint is a Sens model
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Explain a recommendation by its most similar history item.
    Explain(ExplainArgs),
    /// synth → distill → embed → train Base and Sens → eval → report.
    Pipeline,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Recommended item; when absent, the top item of --checkpoint for --user.
    #[arg(long)]
    item: Option<String>,
    /// Comma-separated history; when absent, the user's history from --interactions.
    #[arg(long, value_delimiter = ',')]
    history: Vec<String>,
    #[arg(long)]
    user: Option<String>,
    #[arg(long)]
    interactions: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

/// Outcome of a command that ran to completion.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Invalid,
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Invalid) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    ModelKind::ALL
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| format!("expected one of causal, masked, frequency, got {s:?}"))
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.resolve(cli.seed)
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("create {}", cli.out_dir.display()))?;
    Ok(&cli.out_dir)
}

fn read_annotations(path: &Path) -> Result<Parsed> {
    let bytes = fs::read(path).with_context(|| format!("read {}", path.display()))?;
    Ok(parse_annotations(&bytes))
}

fn report_issues(path: &Path, p: &Parsed) {
    for i in &p.issues {
        eprintln!(
            "{}: {} {} item {:?}{}: {}",
            path.display(),
            if i.is_error() { "error" } else { "warning" },
            i.code,
            i.item_id,
            i.record_index.map_or(String::new(), |r| format!(" record {r}")),
            i.message
        );
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = load_config(cli)?;
    let threads = cli.threads.max(1);
    match &cli.command {
        Command::Validate { annotations, write } => {
            let p = read_annotations(annotations)?;
            report_issues(annotations, &p);
            println!(
                "{}",
                serde_json::json!({
                    "items": p.items.len(),
                    "records": p.n_records(),
                    "errors": p.n_errors(),
                    "warnings": p.n_warnings(),
                })
            );
            if *write {
                let dir = out_dir(cli)?;
                fs::write(
                    dir.join("annotations.jsonl"),
                    crate::annotations::serialize_annotations(&p.items),
                )?;
                fs::write(dir.join("issues.jsonl"), serialize_issues(&p.issues))?;
            }
            Ok(if p.n_errors() == 0 {
                Outcome::Ok
            } else {
                Outcome::Invalid
            })
        }
        Command::Align {
            pred,
            reference,
            thresholds,
        } => {
            if thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
                bail!("thresholds must lie in (0, 1]");
            }
            let (p, r) = (read_annotations(pred)?, read_annotations(reference)?);
            report_issues(pred, &p);
            report_issues(reference, &r);
            if p.n_errors() + r.n_errors() > 0 {
                return Ok(Outcome::Invalid);
            }
            let rows = alignment_rows(
                &p.items,
                &r.items,
                &default_value_similarity,
                thresholds,
                &TaxonomyMap::default(),
            );
            let dir = out_dir(cli)?;
            let mut m = Manifest::new("align", &cfg, threads);
            m.input(pred)?;
            m.input(reference)?;
            write_json(&dir.join("alignment.json"), &alignment_json(&rows))?;
            fs::write(dir.join("alignment.csv"), alignment_csv(&rows))?;
            m.output(&dir.join("alignment.json"))?;
            m.output(&dir.join("alignment.csv"))?;
            write_json(&dir.join("align.manifest.json"), &m)?;
            print!("{}", alignment_text(&rows));
            Ok(Outcome::Ok)
        }
        Command::Audit { votes } => {
            let v: Vec<AuditVotes> = read_jsonl(votes)?;
            let report = aggregate_audit(&v)?;
            let dir = out_dir(cli)?;
            write_json(&dir.join("audit.json"), &report)?;
            print!("{}", audit_text(&report));
            Ok(Outcome::Ok)
        }
        Command::Synth => {
            let dir = out_dir(cli)?;
            let mut m = Manifest::new("synth", &cfg, threads);
            let w = stage("synth", || Ok(generate_synthetic(&cfg.synth)?))?;
            for p in pipeline::write_world(dir, &w)? {
                m.output(&p)?;
            }
            write_json(&dir.join("synth.manifest.json"), &m)?;
            eprintln!(
                "{} users, {} items, {} interactions",
                w.user_ids.len(),
                w.item_ids.len(),
                w.log.len()
            );
            Ok(Outcome::Ok)
        }
        Command::Distill { items, targets } => {
            let dir = out_dir(cli)?;
            let mut m = Manifest::new("distill", &cfg, threads);
            m.input(items)?;
            m.input(targets)?;
            let texts = read_items(items)?;
            let targets = read_targets(targets)?;
            let (student, log) = stage("distill", || pipeline::distill(&texts, &targets, &cfg))?;
            let ckpt = dir.join("student.ckpt");
            save_student(&ckpt, &student)?;
            write_jsonl(&dir.join("distill.jsonl"), &log)?;
            m.output(&ckpt)?;
            write_json(&dir.join("distill.manifest.json"), &m)?;
            if let Some(v) = log.last().and_then(|e| e.val.as_ref()) {
                println!("{}", serde_json::to_string(v)?);
            }
            Ok(Outcome::Ok)
        }
        Command::Embed { student, items } => {
            let dir = out_dir(cli)?;
            let mut m = Manifest::new("embed", &cfg, threads);
            m.input(student)?;
            m.input(items)?;
            let s = load_student(student)?;
            let table = stage("embed", || pipeline::embed(&s, &read_items(items)?))?;
            let p = dir.join("sensory.sens");
            write_table(&p, &table)?;
            m.output(&p)?;
            write_json(&dir.join("embed.manifest.json"), &m)?;
            eprintln!("{} rows", table.len());
            Ok(Outcome::Ok)
        }
        Command::Train {
            interactions,
            kind,
            table,
        } => {
            let dir = out_dir(cli)?;
            let mut m = Manifest::new("train", &cfg, threads);
            m.input(interactions)?;
            let table = match table {
                Some(t) => {
                    m.input(t)?;
                    Some(read_table(t).with_context(|| format!("read {}", t.display()))?)
                }
                None => None,
            };
            let split = pipeline::prepare_split(&read_interactions(interactions)?);
            let (rec, hist) = stage("train", || pipeline::train(&split, &cfg, *kind, table.as_ref()))?;
            for p in save_recommender(dir, &pipeline::stem(*kind, table.is_some()), &rec, &hist)? {
                m.output(&p)?;
            }
            write_json(&dir.join("train.manifest.json"), &m)?;
            Ok(Outcome::Ok)
        }
        Command::Eval {
            interactions,
            checkpoints,
            table,
        } => {
            let dir = out_dir(cli)?;
            let mut m = Manifest::new("eval", &cfg, threads);
            m.input(interactions)?;
            let table = match table {
                Some(t) => {
                    m.input(t)?;
                    Some(read_table(t).with_context(|| format!("read {}", t.display()))?)
                }
                None => None,
            };
            let split = pipeline::prepare_split(&read_interactions(interactions)?);
            let cases = split.test_cases();
            let mut reports = Vec::new();
            for c in checkpoints {
                m.input(c)?;
                let rec = load_recommender(c, table.as_ref())?;
                if rec.items != split.items {
                    bail!("{} was trained on a different catalog", c.display());
                }
                reports.push(stage("eval", || {
                    evaluate(&rec, &cfg.domain, &cases, &cfg.eval.ks, threads)
                })?);
            }
            attach_markers(&mut reports, cfg.eval.bootstrap_resamples, cfg.seed)?;
            for p in pipeline::write_metrics(dir, &reports)? {
                m.output(&p)?;
            }
            write_json(&dir.join("eval.manifest.json"), &m)?;
            print!("{}", crate::report::metrics_text(&reports));
            Ok(Outcome::Ok)
        }
        Command::Explain(a) => cmd_explain(a),
        Command::Pipeline => {
            pipeline::run_pipeline(&cfg, out_dir(cli)?, threads)?;
            Ok(Outcome::Ok)
        }
    }
}

fn cmd_explain(a: &ExplainArgs) -> Result<Outcome> {
    let table = read_table(&a.table).with_context(|| format!("read {}", a.table.display()))?;
    let ann = read_annotations(&a.annotations)?;
    report_issues(&a.annotations, &ann);
    let mut history = a.history.clone();
    if history.is_empty() {
        let (Some(user), Some(path)) = (&a.user, &a.interactions) else {
            bail!("give --history, or --user with --interactions");
        };
        let log = read_interactions(path)?;
        let seqs = log.sequences();
        let seq = seqs
            .get(user.as_str())
            .with_context(|| format!("user {user:?} not in {}", path.display()))?;
        history = seq.iter().map(|s| s.to_string()).collect();
    }
    let item = match &a.item {
        Some(i) => i.clone(),
        None => {
            let ckpt = a.checkpoint.as_ref().context("give --item or --checkpoint")?;
            let rec = load_recommender(ckpt, Some(&table))?;
            let idx: Vec<usize> = history
                .iter()
                .map(|h| {
                    rec.items
                        .binary_search(h)
                        .map(|i| i + 1)
                        .map_err(|_| anyhow::anyhow!("history item {h:?} not in the checkpoint catalog"))
                })
                .collect::<Result<_>>()?;
            let scores = rec.model.score_all_items(&idx)?;
            let best = scores
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (j, &s)| if s > b.1 { (j, s) } else { b });
            rec.items[best.0].clone()
        }
    };
    let e = explain(&item, &history, &table, &ann.items)?;
    println!("{}", serde_json::to_string_pretty(&e)?);
    Ok(Outcome::Ok)
}
