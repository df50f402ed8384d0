//! Finite-difference sweep over every autodiff primitive.
//!
//! Shared by the test suite and the `gradcheck` CLI command: builds random
//! instances of each primitive (plus one expression composing them), compares
//! analytic gradients against central differences, and returns the worst
//! relative error seen.

use std::sync::Arc;

use rand::Rng;

use super::gradcheck::{central_diff, max_rel_err, FD_EPS};
use super::matrix::Matrix;
use super::tape::{Neighbors, Tape};
use crate::rngstream::stream;

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized data")
}

/// Values kept away from relu's kink and the probability clamp so central
/// differences stay informative.
fn random_positive(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(0.2..2.0)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized data")
}

fn ring_neighbors(n: usize) -> Neighbors {
    Arc::new(
        (0..n)
            .map(|i| {
                let prev = ((i + n - 1) % n) as u32;
                let next = ((i + 1) % n) as u32;
                if prev == next {
                    vec![prev]
                } else {
                    vec![prev, next]
                }
            })
            .collect(),
    )
}

fn check<F>(worst: &mut f64, inputs: &[Matrix], f: F)
where
    F: Fn(&[Matrix]) -> (f64, Vec<Matrix>),
{
    let analytic = f(inputs).1;
    let numeric = central_diff(|xs| f(xs).0, inputs, FD_EPS);
    *worst = worst.max(max_rel_err(&analytic, &numeric));
}

/// Runs a tape computation over leaves built from `xs`, then returns the
/// scalar value together with the gradient of every leaf.
fn eval<'a, F>(xs: &[Matrix], build: F) -> (f64, Vec<Matrix>)
where
    F: for<'t> Fn(&'t Tape, &[super::tape::Tensor<'t>]) -> super::tape::Tensor<'t>,
{
    let tape = Tape::new();
    let leaves: Vec<_> = xs.iter().map(|x| tape.leaf(x.clone(), true)).collect();
    let out = build(&tape, &leaves);
    let value = out.value().scalar();
    let grads = out.backward().expect("scalar backward");
    let gs = leaves
        .iter()
        .map(|l| grads.wrt(*l).cloned().unwrap_or_else(|| {
            Matrix::zeros(l.rows(), l.cols())
        }))
        .collect();
    (value, gs)
}

/// One finite-difference pass over every primitive for one seed; returns the
/// worst relative error.
pub fn primitive_gradcheck(seed: u64) -> f64 {
    let mut rng = stream(seed, 0, 0);
    let n = rng.gen_range(2..=5usize);
    let k = rng.gen_range(2..=4usize);
    let m = rng.gen_range(2..=4usize);
    let mut worst: f64 = 0.0;

    // matmul
    let inputs = [random_matrix(&mut rng, n, k), random_matrix(&mut rng, k, m)];
    check(&mut worst, &inputs, |xs| {
        eval(xs, |_, ls| ls[0].matmul(ls[1]).unwrap().sum_all())
    });

    // add / sub / mul / scale
    let inputs = [random_matrix(&mut rng, n, m), random_matrix(&mut rng, n, m)];
    check(&mut worst, &inputs, |xs| {
        eval(xs, |_, ls| {
            let s = ls[0].add(ls[1]).unwrap().mul(ls[0]).unwrap();
            s.sub(ls[1]).unwrap().scale(1.7).sum_all()
        })
    });

    // relu (inputs bounded away from 0 by the generator's granularity)
    let inputs = [random_matrix(&mut rng, n, m)];
    check(&mut worst, &inputs, |xs| {
        eval(xs, |_, ls| ls[0].relu().sum_all())
    });

    // add_row bias broadcast
    let inputs = [random_matrix(&mut rng, n, m), random_matrix(&mut rng, 1, m)];
    check(&mut worst, &inputs, |xs| {
        eval(xs, |_, ls| ls[0].add_row(ls[1]).unwrap().sum_all())
    });

    // softmax_rows, weighted so the gradient is nondegenerate
    let weights = random_matrix(&mut rng, n, m);
    let inputs = [random_matrix(&mut rng, n, m), weights];
    check(&mut worst, &inputs, |xs| {
        eval(xs, |_, ls| {
            ls[0].softmax_rows().mul(ls[1]).unwrap().sum_all()
        })
    });

    // log_rows on strictly positive input
    let inputs = [random_positive(&mut rng, n, m)];
    check(&mut worst, &inputs, |xs| {
        eval(xs, |_, ls| ls[0].log_rows().sum_all())
    });

    // mean_rows
    let inputs = [random_matrix(&mut rng, n, m)];
    check(&mut worst, &inputs, |xs| {
        eval(xs, |_, ls| ls[0].mean_rows().unwrap().sum_all())
    });

    // gather_rows with a repeated index
    let mut idx: Vec<usize> = (0..n + 1).map(|_| rng.gen_range(0..n)).collect();
    idx[0] = idx[n]; // force at least one repeat
    let inputs = [random_matrix(&mut rng, n, m)];
    let idx_c = idx.clone();
    check(&mut worst, &inputs, move |xs| {
        let idx = idx_c.clone();
        eval(xs, move |_, ls| ls[0].gather_rows(&idx).unwrap().sum_all())
    });

    // adj_sum over a ring
    let neighbors = ring_neighbors(n);
    let inputs = [random_matrix(&mut rng, n, m), random_matrix(&mut rng, n, m)];
    let nb = Arc::clone(&neighbors);
    check(&mut worst, &inputs, move |xs| {
        let nb = Arc::clone(&nb);
        eval(xs, move |_, ls| {
            ls[0].adj_sum(&nb).unwrap().mul(ls[1]).unwrap().sum_all()
        })
    });

    // scale_rows
    let factors: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let inputs = [random_matrix(&mut rng, n, m)];
    let fc = factors.clone();
    check(&mut worst, &inputs, move |xs| {
        let fc = fc.clone();
        eval(xs, move |_, ls| ls[0].scale_rows(&fc).unwrap().sum_all())
    });

    // kl_categorical against a random target distribution
    let mut p: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
    let psum: f64 = p.iter().sum();
    for x in &mut p {
        *x /= psum;
    }
    let inputs = [random_matrix(&mut rng, 1, m)];
    let pc = p.clone();
    check(&mut worst, &inputs, move |xs| {
        let pc = pc.clone();
        eval(xs, move |_, ls| ls[0].kl_categorical(&pc).unwrap())
    });

    // cross_entropy
    let label = rng.gen_range(0..m);
    let inputs = [random_matrix(&mut rng, 1, m)];
    check(&mut worst, &inputs, move |xs| {
        eval(xs, move |_, ls| ls[0].cross_entropy(label).unwrap())
    });

    // composed expression: affine -> relu -> neighbor sum -> pool -> head
    let inputs = [
        random_matrix(&mut rng, n, k),
        random_matrix(&mut rng, k, m),
        random_matrix(&mut rng, 1, m),
        random_matrix(&mut rng, m, 3),
    ];
    let nb = Arc::clone(&neighbors);
    let p3 = [0.6, 0.3, 0.1];
    check(&mut worst, &inputs, move |xs| {
        let nb = Arc::clone(&nb);
        eval(xs, move |_, ls| {
            let h = ls[0]
                .matmul(ls[1])
                .unwrap()
                .add_row(ls[2])
                .unwrap()
                .relu();
            let agg = h.adj_sum(&nb).unwrap().add(h).unwrap();
            let pooled = agg.mean_rows().unwrap();
            let logits = pooled.matmul(ls[3]).unwrap();
            let kl = logits.kl_categorical(&p3).unwrap();
            let ce = logits.cross_entropy(1).unwrap();
            kl.add(ce).unwrap()
        })
    });

    worst
}

/// Sweeps `n_seeds` random instances of every primitive; returns the maximum
/// relative error against central finite differences.
pub fn primitive_gradcheck_sweep(n_seeds: u64) -> f64 {
    (0..n_seeds)
        .map(primitive_gradcheck)
        .fold(0.0, f64::max)
}
