use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::kernel::grad_check;

fn unit(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

fn rows(v: &[Vec<f64>]) -> Tensor {
    Tensor::matrix(v.len(), v[0].len(), v.concat()).unwrap()
}

#[test]
fn perfect_single_match_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v: Vec<f64> = (0..TEACHER_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t = rows(&[v]);
    assert_eq!(distill_loss(&t, &t, 1.0, 0.07).unwrap(), 0.0);
}

#[test]
fn orthogonal_pair_regression_is_two() {
    let l = distill_loss(&rows(&[unit(8, 0)]), &rows(&[unit(8, 3)]), 0.0, 0.07).unwrap();
    assert!((l - 2.0).abs() < 1e-12);
}

#[test]
fn two_row_nce_closed_form() {
    // f_i = z_i and f_i ⟂ z_j: regression 0, NCE per row -log(e / (e + 1))
    let f = rows(&[unit(4, 0), unit(4, 1)]);
    let l = distill_loss(&f, &f, 1.0, 1.0).unwrap();
    let want = (1.0f64 + (-1.0f64).exp()).ln();
    assert!((l - want).abs() < 1e-6);
    assert!((want - 0.313262).abs() < 1e-6);
}

#[test]
fn temperature_must_be_positive() {
    let f = rows(&[unit(4, 0)]);
    assert_eq!(distill_loss(&f, &f, 1.0, 0.0), Err(Error::NonPositiveTemperature(0.0)));
    assert!(distill_loss(&f, &f, 1.0, -1.0).is_err());
    let cfg = DistillConfig {
        tau: 0.0,
        ..DistillConfig::default()
    };
    assert!(train_student(&[], &[], StudentConfig::default(), &cfg).is_err());
}

#[test]
fn loss_is_nonnegative_and_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let b = rng.random_range(1..6);
        let f: Vec<Vec<f64>> = (0..b)
            .map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let z: Vec<Vec<f64>> = (0..b)
            .map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let l = distill_loss(&rows(&f), &rows(&z), 0.5, 0.2).unwrap();
        assert!(l >= 0.0);
        let perm: Vec<usize> = (0..b).rev().collect();
        let fp: Vec<Vec<f64>> = perm.iter().map(|&i| f[i].clone()).collect();
        let zp: Vec<Vec<f64>> = perm.iter().map(|&i| z[i].clone()).collect();
        let lp = distill_loss(&rows(&fp), &rows(&zp), 0.5, 0.2).unwrap();
        assert!((l - lp).abs() < 1e-12);
    }
}

#[test]
fn distill_gradient_matches_finite_differences() {
    let cfg = StudentConfig {
        vocab: 40,
        hidden: 16,
        max_tokens: 16,
    };
    let mut model = StudentModel::new(cfg, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let seqs: Vec<Vec<usize>> = (0..4)
        .map(|i| (0..3 + i).map(|_| rng.random_range(0..40)).collect())
        .collect();
    let tdata: Vec<f64> = (0..4 * TEACHER_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
    let targets = Tensor::matrix(4, TEACHER_DIM, tdata).unwrap();
    let shadow = model.clone();
    let r = grad_check(&mut model.params, 1e-5, 400, 5, |g| {
        let s: Vec<&[usize]> = seqs.iter().map(Vec::as_slice).collect();
        let out = shadow.forward(g, &s)?;
        let t = g.constant(targets.clone());
        distill_loss_graph(g, out, t, 1.0, 0.5)
    })
    .unwrap();
    assert!(r.max_rel_error <= 1e-4, "{}", r.max_rel_error);
}

fn toy_examples(n: usize, seed: u64) -> Vec<StudentExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = ["red", "blue", "soft", "rough", "vanilla", "mint", "loud", "quiet"];
    let basis: Vec<Vec<f64>> = (0..words.len())
        .map(|_| (0..TEACHER_DIM).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let tok = HashTokenizer::new(256, 32);
    (0..n)
        .map(|i| {
            let a = rng.random_range(0..words.len());
            let b = rng.random_range(0..words.len());
            let text = alloc::format!("a {} and {} thing", words[a], words[b]);
            let target = basis[a].iter().zip(&basis[b]).map(|(x, y)| x + y).collect();
            StudentExample {
                item_id: alloc::format!("i{i}"),
                tokens: tok.encode_str(&text),
                target,
            }
        })
        .collect()
}

#[test]
fn training_is_deterministic_and_loss_decreases() {
    let ex = toy_examples(64, 7);
    let cfg = DistillConfig {
        epochs: 8,
        batch_size: 16,
        lr: 1e-2,
        ..DistillConfig::default()
    };
    let mcfg = StudentConfig {
        vocab: 256,
        hidden: 16,
        max_tokens: 32,
    };
    let (m1, h1) = train_student(&ex, &ex[..8], mcfg.clone(), &cfg).unwrap();
    let (m2, h2) = train_student(&ex, &ex[..8], mcfg.clone(), &cfg).unwrap();
    assert_eq!(m1.params, m2.params);
    assert_eq!(h1, h2);
    assert_eq!(h1.len(), 8);
    let first = h1[0].train_loss;
    for e in &h1[1..] {
        assert!(e.train_loss <= first, "{} > {}", e.train_loss, first);
    }
    let last = h1.last().unwrap().val.as_ref().unwrap();
    assert!(last.matched_cos > h1[0].val.as_ref().unwrap().matched_cos);

    let (m0, h0) = train_student(&ex, &[], mcfg.clone(), &DistillConfig { epochs: 0, ..cfg }).unwrap();
    assert!(h0.is_empty());
    assert_eq!(m0.params, StudentModel::new(mcfg, cfg.seed).params);
}

#[test]
fn eval_on_exact_outputs() {
    let ex = toy_examples(10, 8);
    let outs: Vec<Vec<f64>> = ex.iter().map(|e| normalized(&e.target)).collect();
    let ev = eval_outputs(&outs, &ex, 1).unwrap();
    assert!(ev.mse < 1e-24);
    assert!((ev.matched_cos - 1.0).abs() < 1e-12);
    assert!(ev.mismatched_cos.unwrap() < 0.9);
    let one = eval_outputs(&outs[..1], &ex[..1], 1).unwrap();
    assert_eq!(one.mismatched_cos, None);
}

#[test]
fn random_targets_untrained_cosines_are_small() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let ex: Vec<StudentExample> = (0..50)
            .map(|i| StudentExample {
                item_id: i.to_string(),
                tokens: (0..5).map(|_| rng.random_range(0..512)).collect(),
                target: (0..TEACHER_DIM).map(|_| normal.sample(&mut rng)).collect(),
            })
            .collect();
        let model = StudentModel::new(
            StudentConfig {
                vocab: 512,
                hidden: 32,
                max_tokens: 16,
            },
            seed,
        );
        let ev = eval_student(&model, &ex, seed).unwrap();
        assert!(ev.matched_cos.abs() < 0.2, "{}", ev.matched_cos);
        assert!(ev.mismatched_cos.unwrap().abs() < 0.2);
    }
}

#[test]
fn missing_target_is_reported() {
    let texts = vec![("a".to_string(), ItemText::default())];
    let err = build_examples(&texts, &[], &HashTokenizer::default()).unwrap_err();
    assert_eq!(err, Error::MissingTarget("a".into()));
}

#[test]
fn export_is_keyed_by_id() {
    let model = StudentModel::new(
        StudentConfig {
            vocab: 128,
            hidden: 8,
            max_tokens: 16,
        },
        1,
    );
    let text = |s: &str| ItemText {
        title: s.to_string(),
        ..ItemText::default()
    };
    let cat: Vec<(String, ItemText)> = vec![
        ("b".into(), text("blue soft")),
        ("a".into(), text("red")),
        ("c".into(), text("")),
    ];
    let t = export_table(&model, &cat).unwrap();
    assert_eq!(t.ids(), ["a", "b", "c"]);
    let mut rev = cat.clone();
    rev.reverse();
    assert_eq!(export_table(&model, &rev).unwrap(), t);
    let tok = model.config.tokenizer();
    let direct = model.embed(&[tok.encode_item(&cat[0].1).as_slice()]).unwrap();
    let want: Vec<f32> = direct[0].iter().map(|v| *v as f32).collect();
    assert_eq!(t.get("b").unwrap(), want.as_slice());
    let mut dup = cat.clone();
    dup.push(("a".into(), text("x")));
    assert_eq!(export_table(&model, &dup), Err(Error::DuplicateItem("a".into())));
}
