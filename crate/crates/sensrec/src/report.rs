//! Rendered reports: alignment rows, Base/Sens metric tables with
//! confidence markers, and the audit summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use sensrec_core::alignment::{AlignmentRow, AuditReport};
use sensrec_core::eval::{HrNdcg, MetricReport};

/// `{row name → {precision, recall, f1}}` in row order.
pub fn alignment_json(rows: &[AlignmentRow]) -> Value {
    let mut m = Map::new();
    for r in rows {
        m.insert(
            r.name.clone(),
            json!({"precision": r.score.precision, "recall": r.score.recall, "f1": r.score.f1}),
        );
    }
    Value::Object(m)
}

pub fn alignment_csv(rows: &[AlignmentRow]) -> String {
    let mut s = String::from("metric,precision,recall,f1,tp_pred,fp,tp_ref,fn\n");
    for r in rows {
        let _ = writeln!(
            s,
            "\"{}\",{:.6},{:.6},{:.6},{},{},{},{}",
            r.name,
            r.score.precision,
            r.score.recall,
            r.score.f1,
            r.counts.tp_pred,
            r.counts.fp,
            r.counts.tp_ref,
            r.counts.fn_
        );
    }
    s
}

pub fn alignment_text(rows: &[AlignmentRow]) -> String {
    let w = rows.iter().map(|r| r.name.len()).max().unwrap_or(6).max(6);
    let mut s = format!("{:<w$}  {:>9}  {:>9}  {:>9}\n", "Metric", "Precision", "Recall", "F1");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<w$}  {:>9.4}  {:>9.4}  {:>9.4}",
            r.name, r.score.precision, r.score.recall, r.score.f1
        );
    }
    s
}

pub fn audit_text(r: &AuditReport) -> String {
    let pol = r.polarity_accuracy.map_or("n/a".to_string(), |p| format!("{p:.2}"));
    format!(
        "{:<6}  {:>7}  {:>7}  {:>8}  {:>8}\n{:<6}  {:>7.2}  {:>7.2}  {:>8}  {:>8.2}\n",
        "",
        "Pair P",
        "Evid. F",
        "Pol. Acc",
        "Neg. Acc",
        "Mean",
        r.pair_precision,
        r.evidence_faithfulness,
        pol,
        r.negation_accuracy
    )
}

/// The persisted form of a [`MetricReport`]; per-user ranks are left out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsJson {
    pub domain: String,
    pub model: String,
    pub setting: String,
    pub metrics: BTreeMap<usize, HrNdcg>,
    pub markers: BTreeMap<String, String>,
}

impl From<&MetricReport> for MetricsJson {
    fn from(r: &MetricReport) -> Self {
        Self {
            domain: r.domain.clone(),
            model: r.model.clone(),
            setting: r.setting.clone(),
            metrics: r.metrics.clone(),
            markers: r.markers.clone(),
        }
    }
}

pub fn metrics_csv(reports: &[MetricReport]) -> String {
    let mut s = String::from("domain,model,setting,k,hr,ndcg,hr_marker,ndcg_marker\n");
    for r in reports {
        for (k, m) in &r.metrics {
            let mk = |name: &str| r.markers.get(&format!("{name}@{k}")).cloned().unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{k},{:.6},{:.6},{},{}",
                r.domain,
                r.model,
                r.setting,
                m.hr,
                m.ndcg,
                mk("hr"),
                mk("ndcg")
            );
        }
    }
    s
}

/// Relative change of `new` over `old` in percent; `None` when `old` is 0.
pub fn relative_change(old: f64, new: f64) -> Option<f64> {
    (old != 0.0).then(|| 100.0 * (new / old - 1.0))
}

/// Plain-text table with one row per report: HR@K columns then NDCG@K, as
/// percentages. A `Sens` row that follows a `Base` row of the same domain
/// and model gets its markers and the relative change against that row.
pub fn metrics_text(reports: &[MetricReport]) -> String {
    let ks: Vec<usize> = reports
        .iter()
        .flat_map(|r| r.metrics.keys().copied())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut cols: Vec<(String, &str, usize)> = ks.iter().map(|&k| (format!("HR@{k}"), "hr", k)).collect();
    cols.extend(ks.iter().map(|&k| (format!("NDCG@{k}"), "ndcg", k)));
    let get = |r: &MetricReport, name: &str, k: usize| -> Option<f64> {
        if name == "hr" {
            r.hr(k)
        } else {
            r.ndcg(k)
        }
    };
    let mut grid: Vec<Vec<String>> = vec![["Domain", "Model", "Setting"]
        .into_iter()
        .map(String::from)
        .chain(cols.iter().map(|c| c.0.clone()))
        .collect()];
    for (i, r) in reports.iter().enumerate() {
        let base = i
            .checked_sub(1)
            .map(|j| &reports[j])
            .filter(|b| b.setting == "Base" && r.setting == "Sens" && b.domain == r.domain && b.model == r.model);
        let mut row = vec![r.domain.clone(), r.model.clone(), r.setting.clone()];
        for (_, name, k) in &cols {
            let Some(v) = get(r, name, *k) else {
                row.push("--".into());
                continue;
            };
            let mut cell = format!("{:.2}", 100.0 * v);
            if let Some(m) = r.markers.get(&format!("{name}@{k}")) {
                cell.push_str(m);
            }
            if let Some(delta) = base
                .and_then(|b| get(b, name, *k))
                .and_then(|old| relative_change(old, v))
            {
                let _ = write!(cell, " ({delta:+.1}%)");
            }
            row.push(cell);
        }
        grid.push(row);
    }
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    for row in &grid {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| {
                let pad = w - cell.chars().count();
                if c < 3 {
                    format!("{cell}{}", " ".repeat(pad))
                } else {
                    format!("{}{cell}", " ".repeat(pad))
                }
            })
            .collect();
        s.push_str(line.join("  ").trim_end());
        s.push('\n');
    }
    s
}
