use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn check<F>(store: &mut ParamStore, f: F)
where
    F: Fn(&mut Graph) -> crate::Result<Var>,
{
    let r = grad_check(store, 1e-5, 200, 7, f).unwrap();
    assert!(r.max_rel_error <= 1e-6, "rel err {}", r.max_rel_error);
}

/// Reduces any tensor to a scalar through a fixed random projection so that
/// every output coordinate carries a distinct weight.
fn project(g: &mut Graph, x: Var, seed: u64) -> crate::Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = g.value(x).shape().to_vec();
    let w = g.constant(rand_tensor(&mut rng, shape));
    let p = g.mul(x, w)?;
    Ok(g.sum(p))
}

#[test]
fn sum_of_squares_gradient_is_twice_x() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]).unwrap());
    let g = &mut Graph::new(&store);
    let xv = g.param(x);
    let sq = g.mul(xv, xv).unwrap();
    let loss = g.sum(sq);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0, 1.0]);
}

#[test]
fn cross_entropy_gradient_is_probs_minus_onehot() {
    let mut store = ParamStore::new();
    let z = store.add("z", Tensor::matrix(1, 3, vec![0.2, -1.0, 2.0]).unwrap());
    let g = &mut Graph::new(&store);
    let zv = g.param(z);
    let loss = g.softmax_cross_entropy(zv, &[1]).unwrap();
    let grads = g.backward(loss).unwrap();
    let e: Vec<f64> = [0.2f64, -1.0, 2.0].iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    let want = [e[0] / s, e[1] / s - 1.0, e[2] / s];
    for (a, b) in grads.get(z).unwrap().data().iter().zip(want) {
        assert!((a - b).abs() < 1e-14);
    }
    assert!((g.value(loss).item() - (s.ln() + 1.0)).abs() < 1e-14);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::zeros(vec![2, 2]));
    let g = &mut Graph::new(&store);
    let xv = g.param(x);
    assert!(matches!(g.backward(xv), Err(crate::Error::NonScalarLoss(_))));
}

#[test]
fn shape_mismatch_reports_both_shapes() {
    let store = ParamStore::new();
    let g = &mut Graph::new(&store);
    let a = g.constant(Tensor::zeros(vec![2, 3]));
    let b = g.constant(Tensor::zeros(vec![2, 3]));
    match g.matmul(a, b) {
        Err(crate::Error::ShapeMismatch { left, right, .. }) => {
            assert_eq!(left, vec![2, 3]);
            assert_eq!(right, vec![2, 3]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn softmax_rows_sum_to_one_and_uniform_on_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let store = ParamStore::new();
    let g = &mut Graph::new(&store);
    let x = g.constant(rand_tensor(&mut rng, vec![5, 9]).reshape(vec![5, 9]).unwrap());
    let x = g.scale(x, 30.0);
    let y = g.softmax(x);
    for i in 0..5 {
        assert!((g.value(y).row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let c = g.constant(Tensor::filled(vec![1, 7], 3.3));
    let u = g.softmax(c);
    for v in g.value(u).data() {
        assert!((v - 1.0 / 7.0).abs() < 1e-15);
    }
}

#[test]
fn l2_normalize_norms_and_zero_row() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let store = ParamStore::new();
    let g = &mut Graph::new(&store);
    let mut t = rand_tensor(&mut rng, vec![4, 6]);
    t.row_mut(2).iter_mut().for_each(|v| *v = 0.0);
    let x = g.constant(t);
    let y = g.l2_normalize(x);
    for i in 0..4 {
        let n: f64 = g.value(y).row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if i == 2 {
            assert_eq!(n, 0.0);
        } else {
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
    let unit = g.constant(Tensor::matrix(1, 3, vec![0.6, 0.0, 0.8]).unwrap());
    let yu = g.l2_normalize(unit);
    for (a, b) in g.value(yu).data().iter().zip([0.6, 0.0, 0.8]) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn grad_matmul_and_matmul_t() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut store = ParamStore::new();
    let a = store.add("a", rand_tensor(&mut rng, vec![2, 3, 4]));
    let b = store.add("b", rand_tensor(&mut rng, vec![4, 5]));
    let c = store.add("c", rand_tensor(&mut rng, vec![7, 5]));
    check(&mut store, |g| {
        let (av, bv, cv) = (g.param(a), g.param(b), g.param(c));
        let ab = g.matmul(av, bv)?;
        let abc = g.matmul_t(ab, cv)?;
        project(g, abc, 1)
    });
}

#[test]
fn grad_add_mul_broadcasts() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    let x = store.add("x", rand_tensor(&mut rng, vec![4, 3]));
    let row = store.add("row", rand_tensor(&mut rng, vec![3]));
    let col = store.add("col", rand_tensor(&mut rng, vec![4, 1]));
    let s = store.add("s", rand_tensor(&mut rng, vec![1, 1]));
    let y = store.add("y", rand_tensor(&mut rng, vec![4, 3]));
    check(&mut store, |g| {
        let (xv, rv, cv, sv, yv) = (g.param(x), g.param(row), g.param(col), g.param(s), g.param(y));
        let t = g.add(xv, rv)?;
        let t = g.mul(t, cv)?;
        let t = g.mul(t, sv)?;
        let t = g.add(t, cv)?;
        let t = g.sub(t, yv)?;
        let t = g.mul(t, yv)?;
        let t = g.add(t, sv)?;
        let t = g.mul(t, rv)?;
        let t = g.scale(t, 0.7);
        project(g, t, 2)
    });
}

#[test]
fn grad_concat_slice_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut store = ParamStore::new();
    let a = store.add("a", rand_tensor(&mut rng, vec![3, 2]));
    let b = store.add("b", rand_tensor(&mut rng, vec![3, 4]));
    let c = store.add("c", rand_tensor(&mut rng, vec![2, 6]));
    check(&mut store, |g| {
        let (av, bv, cv) = (g.param(a), g.param(b), g.param(c));
        let ab = g.concat(av, bv)?;
        let abc = g.concat_rows(ab, cv)?;
        let s = g.slice_cols(abc, 1, 5)?;
        let sq = g.mul(s, s)?;
        project(g, sq, 3)
    });
}

#[test]
fn grad_gather_with_padding() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut store = ParamStore::new();
    let t = store.add("t", rand_tensor(&mut rng, vec![5, 3]));
    check(&mut store, |g| {
        let tv = g.param(t);
        let rows = g.gather(tv, &[0, 2, 2, 4, 1, 0], Some(0))?;
        let sq = g.mul(rows, rows)?;
        project(g, sq, 4)
    });
    let g = &mut Graph::new(&store);
    let tv = g.param(t);
    let rows = g.gather(tv, &[0, 3], Some(0)).unwrap();
    assert!(g.value(rows).row(0).iter().all(|v| *v == 0.0));
    let loss = g.sum(rows);
    let grads = g.backward(loss).unwrap();
    assert!(grads.get(t).unwrap().row(0).iter().all(|v| *v == 0.0));
    assert!(g.gather(tv, &[5], None).is_err());
}

#[test]
fn grad_segment_mean_layer_norm_relu() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut store = ParamStore::new();
    let x = store.add("x", rand_tensor(&mut rng, vec![6, 5]));
    let gamma = store.add("gamma", rand_tensor(&mut rng, vec![5]));
    let beta = store.add("beta", rand_tensor(&mut rng, vec![5]));
    check(&mut store, |g| {
        let (xv, gv, bv) = (g.param(x), g.param(gamma), g.param(beta));
        let m = g.segment_mean(xv, &[2, 0, 3, 1])?;
        let n = g.layer_norm(m, gv, bv)?;
        let r = g.relu(n);
        let r = g.add(r, n)?;
        project(g, r, 5)
    });
}

#[test]
fn grad_softmax_ce_l2() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut store = ParamStore::new();
    let x = store.add("x", rand_tensor(&mut rng, vec![4, 5]));
    check(&mut store, |g| {
        let xv = g.param(x);
        let n = g.l2_normalize(xv);
        let s = g.softmax(n);
        let s2 = g.scale(s, 3.0);
        let ce = g.softmax_cross_entropy(s2, &[0, 4, 2, 2])?;
        let extra = project(g, s, 6)?;
        g.add(ce, extra)
    });
}

#[test]
fn grad_attention_causal_and_padded() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut store = ParamStore::new();
    let q = store.add("q", rand_tensor(&mut rng, vec![10, 8]));
    let k = store.add("k", rand_tensor(&mut rng, vec![10, 8]));
    let v = store.add("v", rand_tensor(&mut rng, vec![10, 8]));
    for causal in [true, false] {
        let mask = AttentionMask {
            batch: 2,
            seq: 5,
            heads: 2,
            causal,
            key_valid: vec![false, true, true, true, true, true, true, true, true, true],
        };
        check(&mut store, |g| {
            let (qv, kv, vv) = (g.param(q), g.param(k), g.param(v));
            let o = g.attention(qv, kv, vv, mask.clone())?;
            project(g, o, 7)
        });
    }
}

#[test]
fn causal_attention_ignores_future() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let q = rand_tensor(&mut rng, vec![5, 4]);
    let k = rand_tensor(&mut rng, vec![5, 4]);
    let v = rand_tensor(&mut rng, vec![5, 4]);
    let mut k2 = k.clone();
    let mut v2 = v.clone();
    k2.row_mut(4).iter_mut().for_each(|x| *x += 1.0);
    v2.row_mut(4).iter_mut().for_each(|x| *x -= 2.0);
    let store = ParamStore::new();
    let mask = AttentionMask {
        batch: 1,
        seq: 5,
        heads: 1,
        causal: true,
        key_valid: vec![true; 5],
    };
    let run = |k: &Tensor, v: &Tensor| {
        let g = &mut Graph::new(&store);
        let (qv, kv, vv) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
        let o = g.attention(qv, kv, vv, mask.clone()).unwrap();
        g.value(o).clone()
    };
    let a = run(&k, &v);
    let b = run(&k2, &v2);
    assert_eq!(a.data()[..16], b.data()[..16]);
    assert_ne!(a.row(4), b.row(4));
}

#[test]
fn grad_dft_seq_mix_select_dot() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut store = ParamStore::new();
    let x = store.add("x", rand_tensor(&mut rng, vec![8, 6]));
    let h = store.add("h", rand_tensor(&mut rng, vec![3, 4]));
    let t = store.add("t", rand_tensor(&mut rng, vec![6, 4]));
    let mats: Vec<f64> = (0..2 * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
    check(&mut store, |g| {
        let xv = g.param(x);
        let f = g.dft(xv, 4, false)?;
        let i = g.dft(f, 4, true)?;
        let fi = g.mul(f, i)?;
        let m = g.seq_mix(fi, 4, mats.clone())?;
        let a = project(g, m, 8)?;
        let (hv, tv) = (g.param(h), g.param(t));
        let sd = g.select_dot(hv, tv, &[0, 5, 5, 1, 2, 3], 2)?;
        let sq = g.mul(sd, sd)?;
        let b = g.mean(sq);
        g.add(a, b)
    });
}

#[test]
fn grad_check_quadratic_is_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut store = ParamStore::new();
    let x = store.add("x", rand_tensor(&mut rng, vec![30, 10]));
    let r = grad_check(&mut store, 1e-5, 200, 1, |g| {
        let xv = g.param(x);
        let sq = g.mul(xv, xv)?;
        let s = g.sum(sq);
        Ok(g.scale(s, 0.01))
    })
    .unwrap();
    assert_eq!(r.coords_checked, 200);
    assert!(r.max_rel_error < 1e-9, "{}", r.max_rel_error);
}

#[test]
fn param_leaf_is_shared() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::scalar(3.0));
    let g = &mut Graph::new(&store);
    let a = g.param(x);
    let b = g.param(x);
    assert_eq!(a, b);
    let p = g.mul(a, b).unwrap();
    let grads = g.backward(p).unwrap();
    assert_eq!(grads.get(x).unwrap().item(), 6.0);
}
