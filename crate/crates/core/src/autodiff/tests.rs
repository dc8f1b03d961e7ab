use proptest::prelude::*;

use super::*;
use crate::graph::build_graph;

const H: f64 = 1e-5;

fn t(rows: &[&[f64]]) -> Tensor<f64> {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn check<F>(f: F, leaves: &[Tensor<f64>]) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    finite_diff_check(f, leaves, H, Fault::None).unwrap().max_rel_err
}

#[test]
fn constant_param_is_zero_leaf() {
    let mut tape = Tape::<f64>::new();
    let p = tape.param(4, 4, Init::Constant(0.0)).unwrap();
    assert_eq!(tape.value(p), &Tensor::zeros(4, 4));
    assert!(tape.requires_grad(p));
}

#[test]
fn xavier_respects_bound_and_seed() {
    let a: Tensor<f64> = Init::XavierUniform { seed: 5 }.build(100, 64).unwrap();
    // √(6/164) = 0.191273...; the commonly quoted 0.19125 is a rounding slip.
    assert!((xavier_bound(100, 64) - 0.191273).abs() < 1e-6);
    assert!((xavier_bound(100, 64) - 0.19125).abs() < 5e-5);
    assert!(a.data().iter().all(|v| v.abs() <= xavier_bound(100, 64)));
    let b: Tensor<f64> = Init::XavierUniform { seed: 5 }.build(100, 64).unwrap();
    assert_eq!(a, b);
    let c: Tensor<f64> = Init::XavierUniform { seed: 6 }.build(100, 64).unwrap();
    assert_ne!(a, c);
}

#[test]
fn zero_dimension_param_is_config_error() {
    assert!(matches!(
        Init::Constant(1.0).build::<f32>(0, 3),
        Err(Error::Config(_))
    ));
}

#[test]
fn matmul_identity_and_shape_error() {
    let mut tape = Tape::<f64>::new();
    let i = tape.constant(Tensor::identity(3));
    let x = tape.constant(t(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]));
    let y = tape.matmul(i, x).unwrap();
    assert_eq!(tape.value(y), tape.value(x));
    assert!(matches!(
        tape.matmul(x, x),
        Err(Error::Dimension { left: (3, 2), right: (3, 2), .. })
    ));
}

#[test]
fn sum_of_matmul_gradient_is_ones_times_bt() {
    let a = t(&[&[1.0, 2.0, -1.0], &[0.5, 0.0, 3.0]]);
    let b = t(&[&[1.0, -2.0], &[0.5, 4.0], &[2.0, 1.0]]);
    let mut tape = Tape::new();
    let va = tape.leaf(a, true);
    let vb = tape.constant(b.clone());
    let c = tape.matmul(va, vb).unwrap();
    let s = tape.reduce_sum(c);
    tape.backward(s).unwrap();
    // (ones · Bᵀ)[r, k] = Σ_j B[k, j]
    let expected: Vec<f64> = (0..2)
        .flat_map(|_| (0..3).map(|k| b.row(k).iter().sum::<f64>()))
        .collect();
    assert_eq!(tape.grad(va).unwrap().data(), expected.as_slice());
}

#[test]
fn matmul_variants_gradcheck() {
    let a = t(&[&[1.0, 2.0, -1.0], &[0.5, 0.3, 3.0]]);
    let b = t(&[&[1.0, -2.0], &[0.5, 4.0], &[2.0, 1.0]]);
    let w = t(&[&[0.2, -0.1], &[0.7, 0.4]]);
    let err = check(
        |tp, v| {
            let c = tp.matmul(v[0], v[1])?;
            let d = tp.matmul_tn(v[0], c)?; // 3×2
            let e = tp.matmul_nt(d, v[1])?; // 3×3
            let f = tp.matmul(e, v[1])?;
            let g = tp.matmul(f, v[2])?;
            let h = tp.hadamard(g, g)?;
            Ok(tp.reduce_sum(h))
        },
        &[a, b, w],
    );
    assert!(err < 1e-6, "{err}");
}

#[test]
fn spmm_toy_value_and_gradient() {
    let g = build_graph::<f64>(&[(0, 0), (1, 0), (1, 1)], 2, 2).unwrap();
    let mut tape = Tape::new();
    let users = tape.leaf(Tensor::filled(2, 1, 1.0), true);
    let items = tape.spmm(&g.users_into_items(), users).unwrap();
    assert!((tape.value(items).get(0, 0) - 1.20711).abs() < 1e-5);

    let x = t(&[&[0.3, -1.0], &[2.0, 0.5]]);
    let err = check(
        |tp, v| {
            let a = tp.spmm(&g.users_into_items(), v[0])?;
            let b = tp.spmm(&g.items_into_users(), a)?;
            let c = tp.hadamard(b, b)?;
            Ok(tp.reduce_sum(c))
        },
        &[x],
    );
    assert!(err < 1e-6, "{err}");
}

#[test]
fn softmax_values() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t(&[&[0.0, 0.0, 0.0], &[1000.0, 0.0, 0.0]]));
    let y = tape.row_softmax(x, 1.0).unwrap();
    let v = tape.value(y);
    for c in 0..3 {
        assert!((v.get(0, c) - 1.0 / 3.0).abs() < 1e-15);
    }
    assert_eq!(v.row(1), &[1.0, 0.0, 0.0]);
    assert!(v.is_finite());
}

#[test]
fn softmax_rejects_nan() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t(&[&[f64::NAN, 0.0]]));
    assert!(matches!(tape.row_softmax(x, 1.0), Err(Error::Numeric(_))));
}

#[test]
fn softmax_gradcheck() {
    let x = t(&[&[0.3, -1.2, 2.0], &[0.1, 0.1, -0.4]]);
    let w = t(&[&[1.0, 2.0, -3.0], &[0.5, -1.0, 4.0]]);
    let err = check(
        |tp, v| {
            let s = tp.row_softmax(v[0], 0.7)?;
            let p = tp.hadamard(s, v[1])?;
            Ok(tp.reduce_sum(p))
        },
        &[x, w],
    );
    assert!(err < 1e-4, "{err}");
}

#[test]
fn l2_normalize_values_and_zero_rows() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(t(&[&[3.0, 4.0], &[0.0, 0.0]]), true);
    let y = tape.row_l2_normalize(x);
    assert_eq!(tape.value(y).row(0), &[0.6, 0.8]);
    assert_eq!(tape.value(y).row(1), &[0.0, 0.0]);
    let s = tape.reduce_sum(y);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().row(1), &[0.0, 0.0]);
}

#[test]
fn l2_normalize_gradcheck() {
    let x = t(&[&[3.0, 4.0, -1.0], &[0.2, -0.7, 0.1]]);
    let w = t(&[&[1.0, -2.0, 0.5], &[0.3, 0.9, -1.1]]);
    let err = check(
        |tp, v| {
            let n = tp.row_l2_normalize(v[0]);
            let p = tp.hadamard(n, v[1])?;
            Ok(tp.reduce_sum(p))
        },
        &[x, w],
    );
    assert!(err < 1e-4, "{err}");
}

#[test]
fn log_sigmoid_values() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t(&[&[0.0, -50.0, 50.0, -800.0]]));
    let y = tape.log_sigmoid(x);
    let v = tape.value(y);
    assert!((v.get(0, 0) + std::f64::consts::LN_2).abs() < 1e-15);
    // ln σ(-50) = -50 - ln(1 + e^-50)
    assert!((v.get(0, 1) + 50.0 + (-50f64).exp()).abs() < 1e-12);
    assert!(v.get(0, 2).abs() < 1e-21);
    assert_eq!(v.get(0, 3), -800.0);
}

#[test]
fn elementwise_gradcheck() {
    let x = t(&[&[0.3, 1.2], &[2.0, 0.4]]);
    let y = t(&[&[-0.5, 0.25], &[1.5, 3.0]]);
    let err = check(
        |tp, v| {
            let a = tp.log_sigmoid(v[0]);
            let b = tp.exp(v[1]);
            let c = tp.log(v[0]);
            let d = tp.sub(a, b)?;
            let e = tp.add(d, c)?;
            let f = tp.hadamard(e, v[1])?;
            let g = tp.div_scalar(f, 3.0)?;
            Ok(tp.reduce_sum(g))
        },
        &[x, y],
    );
    assert!(err < 1e-4, "{err}");
}

#[test]
fn gather_scatter_adds() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::zeros(4, 2), true);
    let g = tape.gather_rows(x, &[2, 2]).unwrap();
    let s = tape.reduce_sum(g);
    tape.backward(s).unwrap();
    let grad = tape.grad(x).unwrap();
    assert_eq!(grad.row(2), &[2.0, 2.0]);
    for r in [0, 1, 3] {
        assert_eq!(grad.row(r), &[0.0, 0.0]);
    }
    assert!(matches!(
        tape.gather_rows(x, &[4]),
        Err(Error::Index { index: 4, len: 4, .. })
    ));
}

#[test]
fn stop_gradient_identity_forward_and_blocks_backward() {
    let xv = t(&[&[1.5, -2.0]]);
    let mut tape = Tape::new();
    let x = tape.leaf(xv.clone(), true);
    let s = tape.stop_gradient(x).unwrap();
    assert_eq!(tape.value(s), &xv);
    let p = tape.hadamard(s, x).unwrap();
    let r = tape.reduce_sum(p);
    tape.backward(r).unwrap();
    // d/dx Σ stop(x)·x = x, not 2x
    assert_eq!(tape.grad(x).unwrap(), &xv);
}

#[test]
fn stop_gradient_matches_detached_reference() {
    let x = t(&[&[0.4, -1.1], &[0.9, 0.2]]);
    let w = t(&[&[0.5, 1.5], &[-0.3, 0.8]]);
    let f = |tp: &mut Tape<f64>, v: &[Var]| {
        let s = tp.stop_gradient(v[0])?;
        let h = tp.matmul(s, v[1])?;
        let m = tp.matmul_tn(h, s)?;
        let e = tp.matmul(h, m)?;
        let all = tp.add(e, v[0])?;
        let sq = tp.hadamard(all, all)?;
        Ok(tp.reduce_sum(sq))
    };
    let ok = finite_diff_check(f, &[x.clone(), w.clone()], H, Fault::None).unwrap();
    assert!(ok.max_rel_err < 1e-4, "{}", ok.max_rel_err);
    let leaky = finite_diff_check(f, &[x, w], H, Fault::LeakyStopGradient).unwrap();
    assert!(leaky.max_rel_err > 1e-2, "{}", leaky.max_rel_err);
    assert_eq!(leaky.worst.0, 0);
}

#[test]
fn row_ops_gradcheck() {
    let a = t(&[&[0.3, 1.2, -0.4], &[2.0, 0.4, 0.1]]);
    let b = t(&[&[-0.5, 0.25, 1.0], &[1.5, -3.0, 0.2]]);
    let err = check(
        |tp, v| {
            let d = tp.row_dot(v[0], v[1])?;
            let e = tp.row_dot(v[0], v[0])?;
            let cat = tp.concat_cols(&[d, e, d])?;
            let lse = tp.row_logsumexp(cat)?;
            let pick = tp.pick_cols(cat, &[1, 0])?;
            let col = tp.select_col(cat, 2)?;
            let w = tp.sub(lse, pick)?;
            let w = tp.add(w, col)?;
            let sr = tp.scale_rows(v[1], w)?;
            let sq = tp.hadamard(sr, v[0])?;
            Ok(tp.reduce_sum(sq))
        },
        &[a, b],
    );
    assert!(err < 1e-4, "{err}");
}

#[test]
fn sum_gradient_is_exactly_ones() {
    let x = t(&[&[0.1, 0.2], &[0.3, 0.4]]);
    let report = finite_diff_check(|tp, v| Ok(tp.reduce_sum(v[0])), &[x], H, Fault::None).unwrap();
    assert!(report.max_rel_err < 1e-9);
}

#[test]
fn backward_requires_scalar_root() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::zeros(2, 2), true);
    assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
}

#[test]
fn repeated_backward_accumulates_until_zeroed() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(t(&[&[1.0, 2.0]]), true);
    let y = tape.hadamard(x, x).unwrap();
    let s = tape.reduce_sum(y);
    tape.backward(s).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().row(0), &[4.0, 8.0]);
    tape.zero_grads();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().row(0), &[2.0, 4.0]);
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let mut tape = Tape::<f64>::new();
        let x = tape
            .param(5, 3, Init::XavierUniform { seed: 9 })
            .unwrap();
        let n = tape.row_l2_normalize(x);
        let l = tape.matmul_nt(n, n).unwrap();
        let lse = tape.row_logsumexp(l).unwrap();
        let s = tape.reduce_sum(lse);
        tape.backward(s).unwrap();
        (tape.scalar(s), tape.grad(x).unwrap().clone())
    };
    assert_eq!(run(), run());
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor<f64>> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |v| Tensor::from_vec(rows, cols, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn every_op_passes_gradcheck(
        a in matrix(3, 4),
        b in matrix(3, 4),
        w in matrix(4, 2),
        edges in prop::collection::btree_set((0u32..3, 0u32..3), 0..9),
    ) {
        let edges: Vec<_> = edges.into_iter().collect();
        let g = build_graph::<f64>(&edges, 3, 3).unwrap();
        let err = check(
            |tp, v| {
                let x = tp.add(v[0], v[1])?;
                let x = tp.spmm(&g.items_into_users(), x)?;
                let x = tp.add(x, v[0])?;
                let p = tp.matmul(x, v[2])?;               // 3×2
                let q = tp.matmul_tn(p, v[1])?;            // 2×4
                let r = tp.matmul(p, q)?;                  // 3×4
                let n = tp.row_l2_normalize(r);
                let m = tp.row_l2_normalize(v[1]);
                let logits = tp.matmul_nt(n, m)?;          // 3×3
                let logits = tp.scale(logits, 2.0);
                let lse = tp.row_logsumexp(logits)?;
                let pick = tp.pick_cols(logits, &[0, 1, 2])?;
                let nce = tp.sub(lse, pick)?;
                let sm = tp.row_softmax(v[0], 0.5)?;
                let d = tp.row_dot(sm, v[1])?;
                let ls = tp.log_sigmoid(d);
                let e = tp.exp(ls);
                let cat = tp.concat_cols(&[nce, e])?;
                let c0 = tp.select_col(cat, 0)?;
                let sr = tp.scale_rows(v[0], c0)?;
                let h = tp.hadamard(sr, v[1])?;
                let s1 = tp.reduce_sum(h);
                let s2 = tp.reduce_sum(cat);
                tp.add(s1, s2)
            },
            &[a, b, w],
        );
        prop_assert!(err < 1e-4, "rel err {}", err);
    }
}
