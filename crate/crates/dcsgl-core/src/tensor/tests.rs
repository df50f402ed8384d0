use std::sync::Arc;

use rand::Rng;

use super::*;
use crate::rngstream::stream;

fn mat(rows: &[&[f64]]) -> Matrix {
    Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

#[test]
fn matmul_identity_and_hand_value() {
    let tape = Tape::new();
    let a = tape.leaf(mat(&[&[1.0, 2.0]]), false);
    let b = tape.leaf(mat(&[&[3.0], &[4.0]]), false);
    let c = a.matmul(b).unwrap();
    assert_eq!(c.value().scalar(), 11.0);

    // reference triple-loop product on a random pair
    let mut rng = stream(1, 0, 0);
    let av: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let bv: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let am = Matrix::from_vec(2, 3, av.clone()).unwrap();
    let bm = Matrix::from_vec(3, 4, bv.clone()).unwrap();
    let mut want = vec![0.0; 8];
    for i in 0..2 {
        for j in 0..4 {
            for k in 0..3 {
                want[i * 4 + j] += av[i * 3 + k] * bv[k * 4 + j];
            }
        }
    }
    assert_eq!(am.matmul(&bm).data(), want.as_slice());

    let i2 = Matrix::identity(3);
    assert_eq!(am.matmul(&i2), am);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let tape = Tape::new();
    let a = tape.leaf(Matrix::zeros(2, 3), false);
    let b = tape.leaf(Matrix::zeros(2, 3), false);
    let err = a.matmul(b).unwrap_err().to_string();
    assert!(err.contains("(2, 3)") && err.contains("matmul"), "{err}");
}

#[test]
fn matmul_backward_matches_finite_differences() {
    let mut rng = stream(2, 0, 0);
    let inputs = [
        Matrix::from_vec(3, 2, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
        Matrix::from_vec(2, 4, (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
    ];
    let run = |xs: &[Matrix]| {
        let tape = Tape::new();
        let a = tape.leaf(xs[0].clone(), true);
        let b = tape.leaf(xs[1].clone(), true);
        let out = a.matmul(b).unwrap().sum_all();
        let val = out.value().scalar();
        let grads = out.backward().unwrap();
        (
            val,
            vec![grads.wrt(a).unwrap().clone(), grads.wrt(b).unwrap().clone()],
        )
    };
    let analytic = run(&inputs).1;
    let numeric = central_diff(|xs| run(xs).0, &inputs, FD_EPS);
    assert!(max_rel_err(&analytic, &numeric) < 1e-6);
}

#[test]
fn relu_values_and_gradient_convention_at_zero() {
    let tape = Tape::new();
    let x = tape.leaf(mat(&[&[-1.0, 0.0, 2.0]]), true);
    let y = x.relu();
    assert_eq!(y.value().data(), &[0.0, 0.0, 2.0]);
    let grads = y.sum_all().backward().unwrap();
    // gradient at exactly 0 is defined as 0
    assert_eq!(grads.wrt(x).unwrap().data(), &[0.0, 0.0, 1.0]);
}

#[test]
fn add_zero_is_identity() {
    let tape = Tape::new();
    let a = tape.leaf(mat(&[&[1.5, -2.5], &[0.25, 4.0]]), false);
    let z = tape.leaf(Matrix::zeros(2, 2), false);
    assert_eq!(a.add(z).unwrap().value(), a.value());
}

#[test]
fn softmax_symmetry_and_row_sums() {
    let tape = Tape::new();
    let x = tape.leaf(mat(&[&[0.0, 0.0]]), false);
    assert_eq!(x.softmax_rows().value().data(), &[0.5, 0.5]);

    let mut rng = stream(3, 0, 0);
    let big = Matrix::from_vec(5, 7, (0..35).map(|_| rng.gen_range(-30.0..30.0)).collect()).unwrap();
    let sm = tape.leaf(big, false).softmax_rows().value();
    for r in 0..sm.rows() {
        let s: f64 = sm.row(r).iter().sum();
        assert!((s - 1.0).abs() < 1e-12, "row sum {s}");
    }
}

#[test]
fn softmax_gradient_matches_finite_differences() {
    let mut rng = stream(4, 0, 0);
    let w: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let inputs = [Matrix::from_vec(2, 3, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()];
    let wm = Matrix::from_vec(2, 3, w).unwrap();
    let run = |xs: &[Matrix]| {
        let tape = Tape::new();
        let x = tape.leaf(xs[0].clone(), true);
        let weights = tape.constant(wm.clone());
        let out = x.softmax_rows().mul(weights).unwrap().sum_all();
        let val = out.value().scalar();
        let g = out.backward().unwrap().wrt(x).unwrap().clone();
        (val, vec![g])
    };
    let analytic = run(&inputs).1;
    let numeric = central_diff(|xs| run(xs).0, &inputs, FD_EPS);
    assert!(max_rel_err(&analytic, &numeric) < 1e-6);
}

#[test]
fn mean_rows_two_row_average_and_empty_pool() {
    let tape = Tape::new();
    let x = tape.leaf(mat(&[&[1.0, 2.0], &[3.0, 4.0]]), false);
    assert_eq!(x.mean_rows().unwrap().value().data(), &[2.0, 3.0]);

    let empty = tape.leaf(Matrix::zeros(0, 2), false);
    let err = empty.mean_rows().unwrap_err();
    assert_eq!(err.to_string(), "empty pool");
}

#[test]
fn gather_rows_identity_accumulation_and_onehot_oracle() {
    let tape = Tape::new();
    let x = tape.leaf(mat(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]), true);

    let all = x.gather_rows(&[0, 1, 2]).unwrap();
    assert_eq!(all.value(), x.value());

    let twice = x.gather_rows(&[0, 0]).unwrap();
    let grads = twice.sum_all().backward().unwrap();
    assert_eq!(grads.wrt(x).unwrap().row(0), &[2.0, 2.0]);
    assert_eq!(grads.wrt(x).unwrap().row(1), &[0.0, 0.0]);

    assert!(x.gather_rows(&[3]).is_err());

    // random gather/backward vs dense one-hot matrix product
    let mut rng = stream(5, 0, 0);
    for trial in 0..20 {
        let n = rng.gen_range(2..6);
        let c = rng.gen_range(1..4);
        let k = rng.gen_range(1..7);
        let idx: Vec<usize> = (0..k).map(|_| rng.gen_range(0..n)).collect();
        let xm = Matrix::from_vec(n, c, (0..n * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let weight =
            Matrix::from_vec(k, c, (0..k * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();

        let tape = Tape::new();
        let x = tape.leaf(xm.clone(), true);
        let w = tape.constant(weight.clone());
        let out = x.gather_rows(&idx).unwrap().mul(w).unwrap().sum_all();
        let got = out.backward().unwrap().wrt(x).unwrap().clone();

        // oracle: gather = S·x with S one-hot, so grad = Sᵀ·(weight)
        let mut onehot = Matrix::zeros(k, n);
        for (r, &i) in idx.iter().enumerate() {
            onehot.set(r, i, 1.0);
        }
        let want = onehot.matmul_tn(&weight);
        assert_eq!(got, want, "trial {trial}");
    }
}

#[test]
fn kl_categorical_examples() {
    // p equal to softmax(logits) numerically
    let tape = Tape::new();
    let logits = tape.leaf(mat(&[&[0.4, -0.3, 1.1]]), false);
    let p = logits.softmax_rows().value().data().to_vec();
    let kl = logits.kl_categorical(&p).unwrap().value().scalar();
    assert!(kl.abs() < 1e-12, "kl {kl}");

    // p=[1,0], q=[0.8,0.2] -> ln(1/0.8)
    let logits = tape.leaf(mat(&[&[0.8f64.ln(), 0.2f64.ln()]]), false);
    let kl = logits.kl_categorical(&[1.0, 0.0]).unwrap().value().scalar();
    assert!((kl - 1.25f64.ln()).abs() < 1e-12);
    assert!((kl - 0.22314355131420976).abs() < 1e-12);

    // p=[0.5,0.5], q=[0.5,0.5] -> 0
    let logits = tape.leaf(mat(&[&[7.0, 7.0]]), false);
    let kl = logits.kl_categorical(&[0.5, 0.5]).unwrap().value().scalar();
    assert!(kl.abs() < 1e-12);

    // not a distribution
    let logits = tape.leaf(mat(&[&[0.0, 0.0]]), false);
    assert!(matches!(
        logits.kl_categorical(&[0.9, 0.3]),
        Err(TensorError::NotADistribution { .. })
    ));
}

#[test]
fn kl_nonnegative_over_random_draws() {
    let mut rng = stream(6, 0, 0);
    for _ in 0..500 {
        let c = rng.gen_range(2..5);
        let mut p: Vec<f64> = (0..c).map(|_| rng.gen_range(0.0..1.0)).collect();
        if rng.gen_bool(0.3) {
            p[0] = 0.0; // exercise 0·log 0
        }
        let s: f64 = p.iter().sum();
        for x in &mut p {
            *x /= s;
        }
        let tape = Tape::new();
        let logits = tape.leaf(
            Matrix::from_vec(1, c, (0..c).map(|_| rng.gen_range(-20.0..20.0)).collect()).unwrap(),
            false,
        );
        let kl = logits.kl_categorical(&p).unwrap().value().scalar();
        assert!(kl >= -1e-12, "kl {kl}");
    }
}

#[test]
fn cross_entropy_uniform_stabilized_and_fd() {
    let tape = Tape::new();
    let l = tape.leaf(mat(&[&[0.0, 0.0]]), false);
    let ce = l.cross_entropy(0).unwrap().value().scalar();
    assert!((ce - 2.0f64.ln()).abs() < 1e-12);

    let l = tape.leaf(mat(&[&[1000.0, 0.0]]), false);
    let ce = l.cross_entropy(0).unwrap().value().scalar();
    assert!(ce.is_finite() && ce.abs() < 1e-9, "ce {ce}");

    let l = tape.leaf(mat(&[&[0.0, 0.0]]), false);
    assert!(matches!(
        l.cross_entropy(2),
        Err(TensorError::LabelOutOfRange { .. })
    ));

    let inputs = [mat(&[&[0.3, -0.8, 0.4]])];
    let run = |xs: &[Matrix]| {
        let tape = Tape::new();
        let l = tape.leaf(xs[0].clone(), true);
        let out = l.cross_entropy(2).unwrap();
        let val = out.value().scalar();
        let g = out.backward().unwrap().wrt(l).unwrap().clone();
        (val, vec![g])
    };
    let analytic = run(&inputs).1;
    let numeric = central_diff(|xs| run(xs).0, &inputs, FD_EPS);
    assert!(max_rel_err(&analytic, &numeric) < 1e-6);
}

#[test]
fn backward_analytic_example_and_determinism() {
    let run = || {
        let tape = Tape::new();
        let x = tape.leaf(mat(&[&[1.0, -1.0]]), true);
        let loss = x.relu().sum_all();
        let grads = loss.backward().unwrap();
        grads.wrt(x).unwrap().clone()
    };
    let g1 = run();
    assert_eq!(g1.data(), &[1.0, 0.0]);
    // two independent tapes over the same values agree bit for bit
    assert_eq!(g1, run());

    let tape = Tape::new();
    let x = tape.leaf(Matrix::zeros(2, 2), true);
    assert!(matches!(
        x.backward(),
        Err(TensorError::NotScalar { rows: 2, cols: 2 })
    ));
}

#[test]
fn backward_skips_constant_subtrees() {
    let tape = Tape::new();
    let x = tape.leaf(mat(&[&[1.0, 2.0]]), true);
    let c = tape.constant(mat(&[&[3.0, 4.0]]));
    let out = x.mul(c).unwrap().sum_all();
    let grads = out.backward().unwrap();
    assert_eq!(grads.wrt(x).unwrap().data(), &[3.0, 4.0]);
    assert!(grads.wrt(c).is_none());
}

#[test]
fn adj_sum_ring_matches_dense_adjacency() {
    let mut rng = stream(7, 0, 0);
    let n = 6;
    let neighbors: Neighbors = Arc::new(
        (0..n)
            .map(|i| {
                vec![((i + n - 1) % n) as u32, ((i + 1) % n) as u32]
            })
            .collect(),
    );
    let x = Matrix::from_vec(n, 3, (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let mut dense = Matrix::zeros(n, n);
    for (i, ns) in neighbors.iter().enumerate() {
        for &j in ns {
            dense.set(i, j as usize, 1.0);
        }
    }
    let tape = Tape::new();
    let xt = tape.leaf(x.clone(), false);
    assert_eq!(xt.adj_sum(&neighbors).unwrap().value(), dense.matmul(&x));
}

#[test]
fn adam_first_step_closed_form() {
    let mut p = Matrix::filled(1, 1, 1.0);
    let g = Matrix::filled(1, 1, 1.0);
    let mut state = AdamState::new(&[(1, 1)]);
    let lr = 0.001;
    adam_step(
        &mut [&mut p],
        &[Some(g)],
        &mut state,
        lr,
        ADAM_BETA1,
        ADAM_BETA2,
        ADAM_EPS,
    )
    .unwrap();
    let delta = 1.0 - p.scalar();
    let want = lr * 1.0 / ((1.0f64).sqrt() + ADAM_EPS);
    assert!((delta - want).abs() < 1e-9, "delta {delta} vs {want}");
}

#[test]
fn adam_zero_gradient_leaves_params_decays_moments() {
    let mut p = Matrix::filled(1, 2, 3.0);
    let mut state = AdamState::new(&[(1, 2)]);
    adam_step(
        &mut [&mut p],
        &[Some(Matrix::filled(1, 2, 1.0))],
        &mut state,
        0.01,
        ADAM_BETA1,
        ADAM_BETA2,
        ADAM_EPS,
    )
    .unwrap();
    let after_first = p.clone();
    let (m1, _) = state.moments(0);
    let m1 = m1.clone();
    adam_step(
        &mut [&mut p],
        &[Some(Matrix::zeros(1, 2))],
        &mut state,
        0.01,
        ADAM_BETA1,
        ADAM_BETA2,
        ADAM_EPS,
    )
    .unwrap();
    // zero update direction is only exact when moments are zero; with decayed
    // moments the parameter still moves, so check the freshly-zeroed case
    let mut q = Matrix::filled(1, 2, 3.0);
    let mut fresh = AdamState::new(&[(1, 2)]);
    adam_step(
        &mut [&mut q],
        &[Some(Matrix::zeros(1, 2))],
        &mut fresh,
        0.01,
        ADAM_BETA1,
        ADAM_BETA2,
        ADAM_EPS,
    )
    .unwrap();
    assert_eq!(q.data(), &[3.0, 3.0]);
    let (m0, v0) = fresh.moments(0);
    assert_eq!(m0.data(), &[0.0, 0.0]);
    assert_eq!(v0.data(), &[0.0, 0.0]);

    let (m2, _) = state.moments(0);
    for (a, b) in m2.data().iter().zip(m1.data()) {
        assert!((a - b * ADAM_BETA1).abs() < 1e-15, "moment decay");
    }
    let _ = after_first;
}

#[test]
fn adam_steps_reproducible_bit_for_bit() {
    let run = || {
        let mut p = Matrix::from_vec(2, 2, vec![0.1, -0.2, 0.3, -0.4]).unwrap();
        let mut state = AdamState::new(&[(2, 2)]);
        for i in 0..10 {
            let g = Matrix::from_vec(2, 2, vec![0.5, -0.1, 0.2 * i as f64, 0.9]).unwrap();
            adam_step(
                &mut [&mut p],
                &[Some(g)],
                &mut state,
                0.01,
                ADAM_BETA1,
                ADAM_BETA2,
                ADAM_EPS,
            )
            .unwrap();
        }
        p
    };
    assert_eq!(run(), run());
}

#[test]
fn adam_subset_step_skips_missing_grads() {
    let mut a = Matrix::filled(1, 1, 1.0);
    let mut b = Matrix::filled(1, 1, 1.0);
    let mut state = AdamState::new(&[(1, 1), (1, 1)]);
    adam_step(
        &mut [&mut a, &mut b],
        &[Some(Matrix::filled(1, 1, 1.0)), None],
        &mut state,
        0.001,
        ADAM_BETA1,
        ADAM_BETA2,
        ADAM_EPS,
    )
    .unwrap();
    assert!(a.scalar() < 1.0);
    assert_eq!(b.scalar(), 1.0);
}

#[test]
fn adam_shape_mismatch_is_an_error() {
    let mut p = Matrix::zeros(2, 2);
    let mut state = AdamState::new(&[(2, 2)]);
    let res = adam_step(
        &mut [&mut p],
        &[Some(Matrix::zeros(1, 2))],
        &mut state,
        0.01,
        ADAM_BETA1,
        ADAM_BETA2,
        ADAM_EPS,
    );
    assert!(res.is_err());
}

#[test]
fn sgd_step_moves_against_gradient() {
    let mut p = Matrix::filled(1, 1, 1.0);
    sgd_step(&mut [&mut p], &[Some(Matrix::filled(1, 1, 2.0))], 0.1).unwrap();
    assert!((p.scalar() - 0.8).abs() < 1e-15);
}

#[test]
fn primitive_sweep_under_tolerance() {
    // ≥100 random shapes/seeds across all primitives
    let worst = primitive_gradcheck_sweep(100);
    assert!(worst < 1e-4, "worst relative error {worst}");
}
