//! Central finite differences, the independent oracle for every analytic
//! gradient in this crate.

use super::matrix::Matrix;

pub const FD_EPS: f64 = 1e-5;

/// Relative errors use max(|a|, |n|, this floor) as the denominator so that
/// finite-difference noise on near-zero gradients does not register as error.
pub const REL_ERR_FLOOR: f64 = 1e-2;

/// Central-difference gradient of `f` with respect to every entry of every
/// input matrix.
pub fn central_diff<F>(mut f: F, inputs: &[Matrix], eps: f64) -> Vec<Matrix>
where
    F: FnMut(&[Matrix]) -> f64,
{
    let mut work: Vec<Matrix> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = Matrix::zeros(inputs[i].rows(), inputs[i].cols());
        for k in 0..inputs[i].data().len() {
            let orig = work[i].data()[k];
            work[i].data_mut()[k] = orig + eps;
            let plus = f(&work);
            work[i].data_mut()[k] = orig - eps;
            let minus = f(&work);
            work[i].data_mut()[k] = orig;
            g.data_mut()[k] = (plus - minus) / (2.0 * eps);
        }
        out.push(g);
    }
    out
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Maximum relative error between analytic and numeric gradient sets.
pub fn max_rel_err(analytic: &[Matrix], numeric: &[Matrix]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!(a.shape(), n.shape(), "gradient shape mismatch in check");
        for (&x, &y) in a.data().iter().zip(n.data()) {
            worst = worst.max(rel_err(x, y));
        }
    }
    worst
}
