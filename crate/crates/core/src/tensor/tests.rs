use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{assert_grads_close, numeric_grad};
use super::{Scalar, Tape, Tensor};
use crate::error::TensorError;

fn randu(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn matmul_identity() {
    let tape = Tape::<f64>::inference();
    let i2 = Tensor::constant(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let b = Tensor::constant(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let out = tape.matmul(&i2, &b).unwrap();
    assert_eq!(out.values(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn matmul_selector_row() {
    let tape = Tape::<f64>::inference();
    let a = Tensor::constant(&[1, 2], vec![1.0, 0.0]).unwrap();
    let b = Tensor::constant(&[2, 1], vec![5.0, 7.0]).unwrap();
    let out = tape.matmul(&a, &b).unwrap();
    assert_eq!(out.shape(), &[1, 1]);
    assert_eq!(out.values(), &[5.0]);
}

#[test]
fn matmul_shape_mismatch() {
    let tape = Tape::<f64>::inference();
    let a = Tensor::constant(&[2, 3], vec![0.0; 6]).unwrap();
    let b = Tensor::constant(&[2, 2], vec![0.0; 4]).unwrap();
    assert!(matches!(tape.matmul(&a, &b), Err(TensorError::ShapeMismatch { .. })));
}

#[test]
fn softmax_uniform_and_stability() {
    let tape = Tape::<f64>::inference();
    let x = Tensor::constant(&[3], vec![0.0, 0.0, 0.0]).unwrap();
    let y = tape.softmax(&x, 0).unwrap();
    for &v in y.values() {
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }
    let x = Tensor::constant(&[2], vec![1000.0, 0.0]).unwrap();
    let y = tape.softmax(&x, 0).unwrap();
    assert!(y.values()[0] > 1.0 - 1e-9);
    assert!(y.values()[1] < 1e-9);
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tape = Tape::<f64>::inference();
    let x = Tensor::constant(&[4, 5], randu(&mut rng, 20)).unwrap();
    for axis in [0usize, 1] {
        let y = tape.softmax(&x, axis).unwrap();
        let (r, c) = (4, 5);
        let lanes = if axis == 0 { c } else { r };
        for l in 0..lanes {
            let sum: f64 = if axis == 0 {
                (0..r).map(|i| y.values()[i * c + l]).sum()
            } else {
                (0..c).map(|j| y.values()[l * c + j]).sum()
            };
            assert!((sum - 1.0).abs() < 1e-9, "axis {axis} lane {l} sums to {sum}");
        }
    }
}

#[test]
fn layer_norm_constant_row_is_zero() {
    let tape = Tape::<f64>::inference();
    let x = Tensor::constant(&[1, 3], vec![5.0, 5.0, 5.0]).unwrap();
    let g = Tensor::constant(&[3], vec![1.0, 1.0, 1.0]).unwrap();
    let b = Tensor::constant(&[3], vec![0.0, 0.0, 0.0]).unwrap();
    let y = tape.layer_norm(&x, &g, &b, 1e-12).unwrap();
    for &v in y.values() {
        assert!(v.abs() < 1e-6);
    }
}

#[test]
fn layer_norm_already_normalized() {
    let tape = Tape::<f64>::inference();
    let x = Tensor::constant(&[1, 2], vec![1.0, -1.0]).unwrap();
    let g = Tensor::constant(&[2], vec![1.0, 1.0]).unwrap();
    let b = Tensor::constant(&[2], vec![0.0, 0.0]).unwrap();
    let y = tape.layer_norm(&x, &g, &b, 1e-15).unwrap();
    assert!((y.values()[0] - 1.0).abs() < 1e-6);
    assert!((y.values()[1] + 1.0).abs() < 1e-6);
}

#[test]
fn backward_sum_gives_ones() {
    let tape = Tape::<f64>::new();
    let x = Tensor::param(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let s = tape.sum(&x).unwrap();
    tape.backward(&s).unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
}

#[test]
fn backward_sum_of_squares() {
    let tape = Tape::<f64>::new();
    let x = Tensor::param(&[3], vec![1.0, 2.0, 3.0]).unwrap();
    let sq = tape.mul(&x, &x).unwrap();
    let s = tape.sum(&sq).unwrap();
    tape.backward(&s).unwrap();
    assert_eq!(x.grad().unwrap(), vec![2.0, 4.0, 6.0]);
}

#[test]
fn backward_errors() {
    let tape = Tape::<f64>::new();
    let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
    let y = tape.mul(&x, &x).unwrap();
    // non-scalar root
    assert!(matches!(tape.backward(&y), Err(TensorError::NonScalarRoot { .. })));
    // detached root
    let c = Tensor::constant(&[], vec![1.0]).unwrap();
    assert!(matches!(tape.backward(&c), Err(TensorError::DetachedRoot)));
    let s = tape.sum(&y).unwrap();
    tape.backward(&s).unwrap();
    // repeated backward without reset
    assert!(matches!(tape.backward(&s), Err(TensorError::TapeConsumed)));
    tape.reset();
    assert_eq!(tape.num_ops(), 0);
}

#[test]
fn grad_accumulates_across_uses_and_tapes() {
    let x = Tensor::param(&[2], vec![1.0f64, 2.0]).unwrap();
    let tape = Tape::new();
    let y = tape.add(&x, &x).unwrap(); // y = 2x
    let s = tape.sum(&y).unwrap();
    tape.backward(&s).unwrap();
    assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    // second backward on a fresh tape accumulates
    let tape2 = Tape::new();
    let s2 = tape2.sum(&x).unwrap();
    tape2.backward(&s2).unwrap();
    assert_eq!(x.grad().unwrap(), vec![3.0, 3.0]);
    x.zero_grad();
    assert!(x.grad().is_none());
}

#[test]
fn cross_tape_input_rejected() {
    let x = Tensor::param(&[2], vec![1.0f64, 2.0]).unwrap();
    let tape1 = Tape::new();
    let y = tape1.add(&x, &x).unwrap();
    let tape2 = Tape::new();
    assert!(matches!(tape2.sum(&y), Err(TensorError::CrossTape)));
}

#[test]
fn non_finite_forward_rejected() {
    let tape = Tape::<f64>::inference();
    let x = Tensor::constant(&[1], vec![1e308]).unwrap();
    let y = tape.add(&x, &x);
    assert!(matches!(y, Err(TensorError::NonFinite)));
}

#[test]
fn masked_fill_blocks_gradient() {
    let tape = Tape::<f64>::new();
    let x = Tensor::param(&[3], vec![1.0, 2.0, 3.0]).unwrap();
    let y = tape.masked_fill(&x, &[false, true, false], -1e9).unwrap();
    assert_eq!(y.values()[1], -1e9);
    let z = tape.mul(&y, &y).unwrap();
    let s = tape.sum(&z).unwrap();
    tape.backward(&s).unwrap();
    let g = x.grad().unwrap();
    assert_eq!(g[1], 0.0);
    assert_eq!(g[0], 2.0);
}

#[test]
fn dropout_deterministic_and_scaled() {
    let x = Tensor::constant(&[100], vec![1.0f64; 100]).unwrap();
    let tape = Tape::inference();
    let mut rng1 = ChaCha8Rng::seed_from_u64(42);
    let mut rng2 = ChaCha8Rng::seed_from_u64(42);
    let y1 = tape.dropout(&x, 0.5, &mut rng1).unwrap();
    let y2 = tape.dropout(&x, 0.5, &mut rng2).unwrap();
    assert_eq!(y1.values(), y2.values());
    for &v in y1.values() {
        assert!(v == 0.0 || (v - 2.0).abs() < 1e-12);
    }
    let y3 = tape.dropout(&x, 0.0, &mut rng1).unwrap();
    assert_eq!(y3.values(), x.values());
}

#[test]
fn embedding_lookup_and_scatter_grad() {
    let tape = Tape::<f64>::new();
    let table = Tensor::param(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let e = tape.embedding_lookup(&table, &[2, 0, 2]).unwrap();
    assert_eq!(e.values(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
    let s = tape.sum(&e).unwrap();
    tape.backward(&s).unwrap();
    assert_eq!(table.grad().unwrap(), vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    assert!(matches!(
        tape.embedding_lookup(&table, &[3]),
        Err(TensorError::IndexOutOfRange { .. })
    ));
}

#[test]
fn concat_slice_round_trip() {
    let tape = Tape::<f64>::inference();
    let a = Tensor::constant(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let b = Tensor::constant(&[2, 3], vec![5.0, 6.0, 7.0, 8.0, 9.0, 10.0]).unwrap();
    let cat = tape.concat(1, &[&a, &b]).unwrap();
    assert_eq!(cat.shape(), &[2, 5]);
    assert_eq!(cat.values(), &[1.0, 2.0, 5.0, 6.0, 7.0, 3.0, 4.0, 8.0, 9.0, 10.0]);
    let back = tape.slice(&cat, 1, 0, 2).unwrap();
    assert_eq!(back.values(), a.values());
    let rows = tape.concat(0, &[&a, &a]).unwrap();
    assert_eq!(rows.shape(), &[4, 2]);
    let r2 = tape.slice(&rows, 0, 2, 2).unwrap();
    assert_eq!(r2.values(), a.values());
}

/// Finite-difference oracle over every differentiable op, run in 64-bit mode.
#[test]
fn finite_difference_every_op() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // Each case: name, input length, loss = scalar built from one op.
    // The closure receives (tape, x) and must route gradients through the op.
    type Case = (&'static str, usize, fn(&Tape<f64>, &Tensor<f64>) -> Tensor<f64>);
    fn weight(tape: &Tape<f64>, y: &Tensor<f64>, seed: u64) -> Tensor<f64> {
        // deterministic weighting so the reduction is not a plain sum
        let mut wrng = ChaCha8Rng::seed_from_u64(seed);
        let w =
            Tensor::constant(y.shape(), (0..y.numel()).map(|_| wrng.gen_range(-1.0..1.0)).collect())
                .unwrap();
        let p = tape.mul(y, &w).unwrap();
        tape.sum(&p).unwrap()
    }
    let cases: Vec<Case> = vec![
        ("add", 6, |t, x| {
            let c = Tensor::constant(&[2, 3], vec![0.3, -0.4, 0.5, 0.1, 0.0, -0.2]).unwrap();
            let x2 = t.reshape(x, &[2, 3]).unwrap();
            let y = t.add(&x2, &c).unwrap();
            let s = t.mul(&y, &y).unwrap();
            t.sum(&s).unwrap()
        }),
        ("sub_mul", 6, |t, x| {
            let c = Tensor::constant(&[6], vec![0.3, -0.4, 0.5, 0.1, 0.9, -0.2]).unwrap();
            let y = t.sub(x, &c).unwrap();
            let z = t.mul(&y, x).unwrap();
            t.sum(&z).unwrap()
        }),
        ("scale_relu", 5, |t, x| {
            let y = t.scale(x, 1.7).unwrap();
            let r = t.relu(&y).unwrap();
            let s = t.mul(&r, &r).unwrap();
            t.sum(&s).unwrap()
        }),
        ("matmul", 12, |t, x| {
            let a = t.slice(&t.reshape(x, &[3, 4]).unwrap(), 0, 0, 3).unwrap();
            let b = Tensor::constant(
                &[4, 2],
                vec![0.2, -0.1, 0.4, 0.3, -0.5, 0.6, 0.1, -0.7],
            )
            .unwrap();
            let y = t.matmul(&a, &b).unwrap();
            let s = t.mul(&y, &y).unwrap();
            t.sum(&s).unwrap()
        }),
        ("transpose", 6, |t, x| {
            let a = t.reshape(x, &[2, 3]).unwrap();
            let y = t.transpose(&a).unwrap();
            let s = t.mul(&y, &y).unwrap();
            t.sum(&s).unwrap()
        }),
        ("softmax_rows", 8, |t, x| {
            let a = t.reshape(x, &[2, 4]).unwrap();
            let y = t.softmax(&a, 1).unwrap();
            weight(t, &y, 11)
        }),
        ("softmax_cols", 8, |t, x| {
            let a = t.reshape(x, &[2, 4]).unwrap();
            let y = t.softmax(&a, 0).unwrap();
            weight(t, &y, 12)
        }),
        ("log_softmax", 7, |t, x| {
            let y = t.log_softmax(x, 0).unwrap();
            weight(t, &y, 13)
        }),
        ("layer_norm", 8, |t, x| {
            let a = t.reshape(x, &[2, 4]).unwrap();
            let g = Tensor::constant(&[4], vec![1.2, 0.8, -0.5, 1.0]).unwrap();
            let b = Tensor::constant(&[4], vec![0.1, -0.2, 0.3, 0.0]).unwrap();
            let y = t.layer_norm(&a, &g, &b, 1e-6).unwrap();
            weight(t, &y, 14)
        }),
        ("add_row", 8, |t, x| {
            let a = t.reshape(x, &[2, 4]).unwrap();
            let r = Tensor::constant(&[4], vec![0.5, -0.5, 0.25, 0.0]).unwrap();
            let y = t.add_row(&a, &r).unwrap();
            let s = t.mul(&y, &y).unwrap();
            t.sum(&s).unwrap()
        }),
        ("masked_fill", 6, |t, x| {
            let y = t.masked_fill(x, &[false, true, false, false, true, false], 0.0).unwrap();
            weight(t, &y, 15)
        }),
        ("concat_slice", 8, |t, x| {
            let a = t.reshape(x, &[2, 4]).unwrap();
            let left = t.slice(&a, 1, 0, 2).unwrap();
            let right = t.slice(&a, 1, 2, 2).unwrap();
            let y = t.concat(1, &[&right, &left]).unwrap();
            weight(t, &y, 16)
        }),
        ("mean", 9, |t, x| {
            let y = t.mul(x, x).unwrap();
            t.mean(&y).unwrap()
        }),
    ];

    for (name, n, build) in cases {
        for case_idx in 0..4 {
            let x0 = randu(&mut rng, n);
            // analytic
            let tape = Tape::new();
            let x = Tensor::param(&[n], x0.clone()).unwrap();
            let loss = build(&tape, &x);
            tape.backward(&loss).unwrap();
            let analytic = x.grad().unwrap();
            // numeric
            let numeric = numeric_grad(&x0, 1e-5, |xs| {
                let t = Tape::inference();
                let xt = Tensor::constant(&[n], xs.to_vec()).unwrap();
                build(&t, &xt).item()
            });
            let (rel, abs) = super::gradcheck::worst_error(&analytic, &numeric, 1e-6);
            assert!(
                rel < 1e-4 && abs < 1e-6,
                "op {name} case {case_idx}: rel {rel:.2e} abs {abs:.2e}"
            );
        }
    }
}

#[test]
fn dropout_gradcheck_with_fixed_mask() {
    // Same seed on every evaluation, so the mask is a constant function of x.
    let x0: Vec<f64> = vec![0.3, -0.2, 0.8, 0.5, -0.9, 0.1];
    let eval = |xs: &[f64]| {
        let t = Tape::inference();
        let xt = Tensor::constant(&[6], xs.to_vec()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let y = t.dropout(&xt, 0.5, &mut rng).unwrap();
        let s = t.mul(&y, &y).unwrap();
        t.sum(&s).unwrap().item()
    };
    let tape = Tape::new();
    let x = Tensor::param(&[6], x0.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let y = tape.dropout(&x, 0.5, &mut rng).unwrap();
    let s = tape.mul(&y, &y).unwrap();
    let loss = tape.sum(&s).unwrap();
    tape.backward(&loss).unwrap();
    let numeric = numeric_grad(&x0, 1e-5, eval);
    assert_grads_close(&x.grad().unwrap(), &numeric, 1e-4, 1e-6);
}

#[test]
fn backward_linearity() {
    // grad of (a*L1 + b*L2) == a*grad(L1) + b*grad(L2) for independent graphs
    let x0 = vec![0.4f64, -0.7, 0.2];
    let (a, b) = (0.3, 1.7);

    let run = |alpha: f64, beta: f64| -> Vec<f64> {
        let tape = Tape::new();
        let x = Tensor::param(&[3], x0.clone()).unwrap();
        let l1 = tape.sum(&tape.mul(&x, &x).unwrap()).unwrap();
        let sm = tape.softmax(&x, 0).unwrap();
        let l2 = tape.sum(&tape.mul(&sm, &sm).unwrap()).unwrap();
        let t1 = tape.scale(&l1, alpha).unwrap();
        let t2 = tape.scale(&l2, beta).unwrap();
        let tot = tape.add(&t1, &t2).unwrap();
        tape.backward(&tot).unwrap();
        x.grad().unwrap()
    };

    let g1 = run(1.0, 0.0); // grad L1
    let g2 = run(0.0, 1.0); // grad L2
    let gc = run(a, b);
    for i in 0..3 {
        assert!((gc[i] - (a * g1[i] + b * g2[i])).abs() < 1e-12);
    }
}

#[test]
fn determinism_bit_identical() {
    let run = || -> (Vec<f32>, Vec<f32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tape = Tape::<f32>::new();
        let x = Tensor::param(&[4, 4], (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let y = tape.softmax(&x, 1).unwrap();
        let z = tape.matmul(&y, &x).unwrap();
        let d = tape.dropout(&z, 0.3, &mut rng).unwrap();
        let s = tape.sum(&d).unwrap();
        tape.backward(&s).unwrap();
        (z.values().to_vec(), x.grad().unwrap())
    };
    let (v1, g1) = run();
    let (v2, g2) = run();
    assert_eq!(v1, v2);
    assert_eq!(g1, g2);
}
