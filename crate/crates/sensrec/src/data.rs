//! Plain-text inputs and outputs: JSONL helpers, interaction logs (CSV or
//! the public Amazon 2014 review dump), item texts and teacher targets.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sensrec_core::eval::{Interaction, InteractionLog};
use sensrec_core::schema::ItemText;
use sensrec_core::student::{SensoryEmbeddingTable, TeacherTarget, TEACHER_DIM};

use crate::binfmt;

/// Reads JSONL where every non-blank line is one `T`.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = BufReader::new(fs::File::open(path).with_context(|| format!("open {}", path.display()))?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("create {}", path.display()))?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("write {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
    serde_json::from_str(&s).with_context(|| format!("parse {}", path.display()))
}

/// `user_id,item_id,timestamp` with a header row.
pub fn write_interactions(path: &Path, log: &InteractionLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["user_id", "item_id", "timestamp"])?;
    for r in &log.records {
        w.write_record([r.user_id.as_str(), r.item_id.as_str(), &r.timestamp.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_interactions_csv(path: &Path) -> Result<InteractionLog> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("open {}", path.display()))?;
    let mut records = Vec::new();
    for (i, row) in r.deserialize::<Interaction>().enumerate() {
        records.push(row.with_context(|| format!("{} row {}", path.display(), i + 1))?);
    }
    Ok(InteractionLog::new(records))
}

#[derive(Deserialize)]
#[allow(non_snake_case)]
struct AmazonReview {
    reviewerID: String,
    asin: String,
    unixReviewTime: i64,
}

/// The 2014 Amazon review dump: one JSON object per line with `reviewerID`,
/// `asin` and `unixReviewTime`; other fields are ignored.
pub fn read_amazon_reviews(path: &Path) -> Result<InteractionLog> {
    let f = BufReader::new(fs::File::open(path).with_context(|| format!("open {}", path.display()))?);
    let mut records = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: AmazonReview = serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        records.push(Interaction {
            user_id: r.reviewerID,
            item_id: r.asin,
            timestamp: r.unixReviewTime,
        });
    }
    Ok(InteractionLog::new(records))
}

/// CSV by default; `.json`/`.jsonl` files are read as the Amazon dump.
pub fn read_interactions(path: &Path) -> Result<InteractionLog> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json" | "jsonl") => read_amazon_reviews(path),
        _ => read_interactions_csv(path),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemLine {
    pub id: String,
    #[serde(flatten)]
    pub text: ItemText,
}

pub fn write_items(path: &Path, texts: &[(String, ItemText)]) -> Result<()> {
    let rows: Vec<ItemLine> = texts
        .iter()
        .map(|(id, text)| ItemLine {
            id: id.clone(),
            text: text.clone(),
        })
        .collect();
    write_jsonl(path, &rows)
}

pub fn read_items(path: &Path) -> Result<Vec<(String, ItemText)>> {
    Ok(read_jsonl::<ItemLine>(path)?
        .into_iter()
        .map(|l| (l.id, l.text))
        .collect())
}

/// Teacher targets are stored as a `SENS` table (rows widened back to
/// `f64` on read).
pub fn write_targets(path: &Path, targets: &[TeacherTarget]) -> Result<()> {
    let rows = targets
        .iter()
        .map(|t| (t.item_id.clone(), t.z.iter().map(|&x| x as f32).collect()))
        .collect();
    binfmt::write_table(path, &SensoryEmbeddingTable::from_rows(TEACHER_DIM, rows)?)?;
    Ok(())
}

pub fn read_targets(path: &Path) -> Result<Vec<TeacherTarget>> {
    let t = binfmt::read_table(path).with_context(|| format!("read {}", path.display()))?;
    if t.dim() != TEACHER_DIM {
        bail!("{}: target width {} is not {TEACHER_DIM}", path.display(), t.dim());
    }
    Ok(t.ids()
        .iter()
        .enumerate()
        .map(|(i, id)| TeacherTarget {
            item_id: id.clone(),
            z: t.row(i).iter().map(|&x| x as f64).collect(),
        })
        .collect())
}
