use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_sensrec");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn validate_exit_codes() {
    let o = run(&["validate", fixture("sample_listing.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(
        (v["items"].as_u64(), v["records"].as_u64(), v["errors"].as_u64()),
        (Some(1), Some(3), Some(0))
    );

    let o = run(&["validate", fixture("bad_facet.jsonl").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert_eq!(stdout_json(&o)["errors"].as_u64(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("UNKNOWN_FACET"));

    let o = run(&["validate", fixture("empty.jsonl").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["items"].as_u64(), Some(0));
}

#[test]
fn validate_write_emits_canonical_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&[
        "--out-dir",
        out,
        "validate",
        "--write",
        fixture("bad_facet.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    let ann = fs::read_to_string(dir.path().join("annotations.jsonl")).unwrap();
    assert_eq!(ann.lines().count(), 1);
    assert!(!ann.contains("price"));
    let issues = fs::read_to_string(dir.path().join("issues.jsonl")).unwrap();
    let v: Value = serde_json::from_str(issues.lines().next().unwrap()).unwrap();
    assert_eq!(v["code"], "UNKNOWN_FACET");
    assert_eq!(v["record_index"], 1);
}

#[test]
fn runtime_failures_exit_two() {
    assert_eq!(code(&run(&["validate", "/nonexistent/file.jsonl"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["train", "--interactions", "x.csv", "--kind", "rnn"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"distill": {"tau": 0.0}}"#).unwrap();
    assert_eq!(code(&run(&["--config", cfg.to_str().unwrap(), "synth"])), 2);
    fs::write(&cfg, r#"{"nonsense": 1}"#).unwrap();
    assert_eq!(code(&run(&["--config", cfg.to_str().unwrap(), "synth"])), 2);
}

// --- alignment golden file and its brute-force oracle ---

type Pairs = Vec<(String, String)>;

fn norm(s: &str) -> String {
    let words: Vec<&str> = s.split_whitespace().collect();
    words
        .join(" ")
        .to_lowercase()
        .trim_matches(|c: char| ".,;:!?".contains(c) || c.is_whitespace())
        .to_string()
}

fn trigram_cos(a: &str, b: &str) -> f64 {
    let (a, b) = (norm(a), norm(b));
    if a == b {
        return 1.0;
    }
    let grams = |s: &str| {
        let c: Vec<char> = s.chars().collect();
        let mut m: BTreeMap<String, f64> = BTreeMap::new();
        for i in 0..c.len().saturating_sub(2) {
            *m.entry(c[i..i + 3].iter().collect()).or_default() += 1.0;
        }
        m
    };
    let (ga, gb) = (grams(&a), grams(&b));
    let dot: f64 = ga.iter().map(|(k, v)| v * gb.get(k).unwrap_or(&0.0)).sum();
    let n = |m: &BTreeMap<String, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
    if ga.is_empty() || gb.is_empty() {
        0.0
    } else {
        dot / (n(&ga) * n(&gb))
    }
}

fn load_pairs(path: &Path) -> BTreeMap<String, Pairs> {
    let mut m: BTreeMap<String, Pairs> = BTreeMap::new();
    for line in fs::read_to_string(path).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let e = m.entry(v["id"].as_str().unwrap().to_string()).or_default();
        for r in v["attributes"].as_array().unwrap() {
            let p = (
                r["attribute"].as_str().unwrap().to_string(),
                norm(r["value"].as_str().unwrap()),
            );
            if !e.contains(&p) {
                e.push(p);
            }
        }
    }
    m
}

/// Largest one-to-one matching where `ok(i, j)` allows pairing, by trying
/// every assignment.
fn max_matching(np: usize, nr: usize, ok: &dyn Fn(usize, usize) -> bool) -> usize {
    fn go(i: usize, np: usize, used: &mut Vec<bool>, ok: &dyn Fn(usize, usize) -> bool) -> usize {
        if i == np {
            return 0;
        }
        let mut best = go(i + 1, np, used, ok);
        for j in 0..used.len() {
            if !used[j] && ok(i, j) {
                used[j] = true;
                best = best.max(1 + go(i + 1, np, used, ok));
                used[j] = false;
            }
        }
        best
    }
    go(0, np, &mut vec![false; nr], ok)
}

fn class(f: &str) -> &'static str {
    match f {
        "texture" | "comfort" | "weight" | "temperature" => "tactile",
        "scent" => "olfactory",
        "flavor" => "gustatory",
        "sound" => "auditory",
        _ => "visual",
    }
}

fn prf(tp_p: usize, np: usize, tp_r: usize, nr: usize) -> [f64; 3] {
    let p = if np == 0 { 1.0 } else { tp_p as f64 / np as f64 };
    let r = if nr == 0 { 1.0 } else { tp_r as f64 / nr as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    [p, r, f]
}

fn oracle_rows(pred: &BTreeMap<String, Pairs>, refs: &BTreeMap<String, Pairs>) -> Vec<(String, [f64; 3])> {
    let ids: std::collections::BTreeSet<&String> = pred.keys().chain(refs.keys()).collect();
    let empty = Vec::new();
    let (mut np, mut nr) = (0, 0);
    let mut tp = BTreeMap::<&str, (usize, usize)>::new();
    for id in ids {
        let p = pred.get(id).unwrap_or(&empty);
        let r = refs.get(id).unwrap_or(&empty);
        np += p.len();
        nr += r.len();
        let mut m = |k: &'static str, n: usize| {
            let e = tp.entry(k).or_default();
            e.0 += n;
            e.1 += n;
        };
        m("exact", max_matching(p.len(), r.len(), &|i, j| p[i] == r[j]));
        for (k, t) in [("s0.8", 0.8), ("s0.7", 0.7), ("s0.6", 0.6)] {
            m(
                k,
                max_matching(p.len(), r.len(), &|i, j| {
                    p[i].0 == r[j].0 && trigram_cos(&p[i].1, &r[j].1) > t
                }),
            );
        }
        let e = tp.entry("facet").or_default();
        e.0 += p.iter().filter(|x| r.iter().any(|y| y.0 == x.0)).count();
        e.1 += r.iter().filter(|y| p.iter().any(|x| x.0 == y.0)).count();
        let e = tp.entry("tax").or_default();
        e.0 += p
            .iter()
            .filter(|x| r.iter().any(|y| class(&y.0) == class(&x.0)))
            .count();
        e.1 += r
            .iter()
            .filter(|y| p.iter().any(|x| class(&x.0) == class(&y.0)))
            .count();
    }
    [
        ("Exact match", "exact"),
        ("Facet selection", "facet"),
        ("Semantic value match, 0.8", "s0.8"),
        ("Semantic value match, 0.7", "s0.7"),
        ("Semantic value match, 0.6", "s0.6"),
        ("Taxonomy match", "tax"),
    ]
    .into_iter()
    .map(|(name, k)| (name.to_string(), prf(tp[k].0, np, tp[k].1, nr)))
    .collect()
}

#[test]
fn align_matches_golden_bytes_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, refs) = (fixture("align_pred.jsonl"), fixture("align_ref.jsonl"));
    let o = run(&[
        "--out-dir",
        dir.path().to_str().unwrap(),
        "align",
        pred.to_str().unwrap(),
        refs.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let golden = fs::read(fixture("align_golden.json")).unwrap();
    assert_eq!(fs::read(dir.path().join("alignment.json")).unwrap(), golden);

    let g: Value = serde_json::from_slice(&golden).unwrap();
    let names: Vec<&String> = g.as_object().unwrap().keys().collect();
    let want = oracle_rows(&load_pairs(&pred), &load_pairs(&refs));
    assert_eq!(names, want.iter().map(|w| &w.0).collect::<Vec<_>>());
    for (name, [p, r, f]) in &want {
        let row = &g[name];
        for (key, v) in [("precision", p), ("recall", r), ("f1", f)] {
            assert!((row[key].as_f64().unwrap() - v).abs() <= 1e-12, "{name} {key}");
        }
    }
    // the fixture separates the thresholds
    assert!(want[2].1[0] < want[3].1[0] && want[3].1[0] < want[4].1[0]);

    let csv = fs::read_to_string(dir.path().join("alignment.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv
        .lines()
        .nth(3)
        .unwrap()
        .starts_with("\"Semantic value match, 0.8\","));
    assert!(dir.path().join("align.manifest.json").exists());
}

#[test]
fn align_identical_and_disjoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let pred = fixture("align_pred.jsonl");
    let o = run(&[
        "--out-dir",
        out,
        "align",
        pred.to_str().unwrap(),
        pred.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&fs::read(dir.path().join("alignment.json")).unwrap()).unwrap();
    for (_, row) in v.as_object().unwrap() {
        for k in ["precision", "recall", "f1"] {
            assert_eq!(row[k].as_f64(), Some(1.0));
        }
    }
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let rec = |f: &str, v: &str| {
        format!(
            r#"{{"attribute":"{f}","value":"{v}","evidence":"","polarity":"neutral","negated":false,"confidence":0.5}}"#
        )
    };
    fs::write(
        &a,
        format!("{{\"id\":\"1\",\"attributes\":[{}]}}\n", rec("color", "red")),
    )
    .unwrap();
    fs::write(
        &b,
        format!("{{\"id\":\"1\",\"attributes\":[{}]}}\n", rec("glossiness", "red")),
    )
    .unwrap();
    let o = run(&["--out-dir", out, "align", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&fs::read(dir.path().join("alignment.json")).unwrap()).unwrap();
    for (name, row) in v.as_object().unwrap() {
        let want = if name == "Taxonomy match" { 1.0 } else { 0.0 };
        assert_eq!(row["f1"].as_f64(), Some(want), "{name}");
    }
    let o = run(&[
        "--out-dir",
        out,
        "align",
        fixture("bad_facet.jsonl").to_str().unwrap(),
        a.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn audit_renders_four_columns() {
    let dir = tempfile::tempdir().unwrap();
    let votes = dir.path().join("v.jsonl");
    let line = |pair: &str, pol: &str, labels: &str| {
        format!(
            r#"{{"item_id":"i","predicted_polarity":"{pol}","pair_correct":{pair},"evidence_supports":[true,true,false],"polarity_labels":{labels},"negation_correct":[true,true,true]}}"#
        )
    };
    fs::write(
        &votes,
        [
            line("[true,true,true]", "positive", r#"["positive","positive","negative"]"#),
            line("[true,false,false]", "unknown", r#"["positive","positive","positive"]"#),
        ]
        .join("\n"),
    )
    .unwrap();
    let o = run(&[
        "--out-dir",
        dir.path().to_str().unwrap(),
        "audit",
        votes.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let head: Vec<&str> = lines[0].split("  ").map(str::trim).filter(|s| !s.is_empty()).collect();
    assert_eq!(head, ["Pair P", "Evid. F", "Pol. Acc", "Neg. Acc"]);
    let row: Vec<&str> = lines[1].split_whitespace().collect();
    assert_eq!(row, ["Mean", "0.50", "1.00", "1.00", "1.00"]);

    fs::write(&votes, r#"{"item_id":"i","predicted_polarity":"positive","pair_correct":[true],"evidence_supports":[true,true,true],"polarity_labels":["positive","positive","positive"],"negation_correct":[true,true,true]}"#).unwrap();
    assert_eq!(
        code(&run(&[
            "--out-dir",
            dir.path().to_str().unwrap(),
            "audit",
            votes.to_str().unwrap()
        ])),
        2
    );
}

const TINY: &str = r#"{"synth": {"n_users": 200, "n_items": 120, "n_clusters": 6}, "distill": {"epochs": 3}, "model": {"d": 16, "max_epochs": 2}, "eval": {"bootstrap_resamples": 100}}"#;

#[test]
fn stepwise_commands_match_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    fs::write(d("cfg.json"), TINY).unwrap();
    let cfg = d("cfg.json");
    let step = d("step");
    let s = |n: &str| format!("{step}/{n}");
    let ok = |args: &[&str]| {
        let o = run(args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };
    ok(&["--config", &cfg, "--out-dir", &step, "synth"]);
    ok(&[
        "--config",
        &cfg,
        "--out-dir",
        &step,
        "distill",
        "--items",
        &s("items.jsonl"),
        "--targets",
        &s("targets.sens"),
    ]);
    ok(&[
        "--config",
        &cfg,
        "--out-dir",
        &step,
        "embed",
        "--student",
        &s("student.ckpt"),
        "--items",
        &s("items.jsonl"),
    ]);
    for kind in ["causal", "masked", "frequency"] {
        ok(&[
            "--config",
            &cfg,
            "--out-dir",
            &step,
            "train",
            "--interactions",
            &s("interactions.csv"),
            "--kind",
            kind,
        ]);
        ok(&[
            "--config",
            &cfg,
            "--out-dir",
            &step,
            "train",
            "--interactions",
            &s("interactions.csv"),
            "--kind",
            kind,
            "--table",
            &s("sensory.sens"),
        ]);
    }
    let mut args = vec!["--config", &cfg, "--out-dir", &step, "eval", "--interactions"];
    let inter = s("interactions.csv");
    let table = s("sensory.sens");
    args.push(&inter);
    let ckpts: Vec<String> = ["causal", "masked", "frequency"]
        .iter()
        .flat_map(|k| [s(&format!("{k}-base.ckpt")), s(&format!("{k}-sens.ckpt"))])
        .collect();
    for c in &ckpts {
        args.push("--checkpoint");
        args.push(c);
    }
    args.extend(["--table", &table]);
    ok(&args);

    let pipe = d("pipe");
    let o = ok(&["--config", &cfg, "--out-dir", &pipe, "--threads", "2", "pipeline"]);
    assert_eq!(
        fs::read(format!("{pipe}/metrics.json")).unwrap(),
        fs::read(s("metrics.json")).unwrap()
    );
    for f in [
        "sensory.sens",
        "student.ckpt",
        "masked-sens.ckpt",
        "causal-base.epochs.jsonl",
        "interactions.csv",
    ] {
        assert_eq!(fs::read(format!("{pipe}/{f}")).unwrap(), fs::read(s(f)).unwrap(), "{f}");
    }
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text, fs::read_to_string(format!("{pipe}/metrics.txt")).unwrap());
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().next().unwrap().contains("NDCG@10"));

    // replaying the manifest reproduces every output
    let replay = d("replay");
    ok(&[
        "--config",
        &format!("{pipe}/manifest.json"),
        "--out-dir",
        &replay,
        "pipeline",
    ]);
    let m1: Value = serde_json::from_slice(&fs::read(format!("{pipe}/manifest.json")).unwrap()).unwrap();
    let m2: Value = serde_json::from_slice(&fs::read(format!("{replay}/manifest.json")).unwrap()).unwrap();
    assert_eq!(m1["outputs"], m2["outputs"]);
    assert_eq!(m1["config"], m2["config"]);
    assert_eq!(m1["seed"], 0);

    let epochs = fs::read_to_string(s("masked-sens.epochs.jsonl")).unwrap();
    let first: Value = serde_json::from_str(epochs.lines().next().unwrap()).unwrap();
    assert_eq!(first["epoch"], 1);
    assert!(first["loss"].is_f64() && first["val_ndcg10"].is_f64());

    let o = ok(&[
        "explain",
        "--table",
        &table,
        "--annotations",
        &s("annotations.jsonl"),
        "--user",
        "u00000",
        "--interactions",
        &inter,
        "--checkpoint",
        &s("causal-sens.ckpt"),
    ]);
    let e: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(e["similarity"].as_f64().unwrap() <= 1.0 + 1e-9);
    assert!(e["anchor"].as_str().unwrap().starts_with('i'));

    // a Sens checkpoint cannot be evaluated without its table
    let o = run(&[
        "--out-dir",
        &step,
        "eval",
        "--interactions",
        &inter,
        "--checkpoint",
        &ckpts[1],
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn seed_flag_changes_the_world() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, TINY).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        let o = run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--out-dir",
            out.to_str().unwrap(),
            "synth",
        ]);
        assert_eq!(code(&o), 0);
    }
    assert_ne!(
        fs::read(a.join("interactions.csv")).unwrap(),
        fs::read(b.join("interactions.csv")).unwrap()
    );
    let m: Value = serde_json::from_slice(&fs::read(b.join("synth.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["synth"]["seed"], 2);
    assert_eq!(m["config"]["model"]["seed"], 2);
}
