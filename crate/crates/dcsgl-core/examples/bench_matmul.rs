use dcsgl_core::tensor::Matrix;
use std::time::Instant;

fn bench(n: usize, k: usize, m: usize, iters: usize) {
    let a = Matrix::from_vec(n, k, (0..n*k).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let b = Matrix::from_vec(k, m, (0..k*m).map(|i| (i as f64 * 0.53).cos()).collect()).unwrap();
    let t = Instant::now();
    let mut acc = 0.0;
    for _ in 0..iters {
        let c = a.matmul(&b);
        acc += c.data()[0];
    }
    let dt = t.elapsed().as_secs_f64();
    let flops = (2 * n * k * m * iters) as f64;
    println!("{}x{}x{}: {:.2} GF/s (acc {acc:.3})", n, k, m, flops / dt / 1e9);
}

fn main() {
    for _ in 0..2 {
        bench(19, 32, 32, 200000);
        bench(19, 4, 32, 200000);
        bench(19, 32, 96, 100000);
        bench(32, 32, 32, 200000);
    }
}
