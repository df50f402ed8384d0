//! Parameter updates: Adam with bias correction, and plain SGD.
//!
//! Both update routines take one gradient slot per parameter; a `None` slot
//! means the parameter did not participate in this step and neither its value
//! nor its optimizer state is touched. That is what lets two interleaved
//! losses over overlapping parameter subsets share a single optimizer.

use super::matrix::Matrix;
use super::TensorError;

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    /// per-parameter step counter for bias correction
    t: Vec<u64>,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        AdamState {
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            t: vec![0; shapes.len()],
        }
    }

    pub fn moments(&self, i: usize) -> (&Matrix, &Matrix) {
        (&self.m[i], &self.v[i])
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// One Adam step over the participating parameters.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[Option<Matrix>],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<(), TensorError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TensorError::ParamCountMismatch {
            params: params.len(),
            grads: grads.len(),
        });
    }
    for (i, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
        let Some(g) = grad else { continue };
        if g.shape() != param.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                lhs: param.shape(),
                rhs: g.shape(),
            });
        }
        state.t[i] += 1;
        let t = state.t[i] as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for ((p, &gx), (mx, vx)) in param
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut()))
        {
            *mx = beta1 * *mx + (1.0 - beta1) * gx;
            *vx = beta2 * *vx + (1.0 - beta2) * gx * gx;
            let m_hat = *mx / bc1;
            let v_hat = *vx / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

pub fn sgd_step(
    params: &mut [&mut Matrix],
    grads: &[Option<Matrix>],
    lr: f64,
) -> Result<(), TensorError> {
    if params.len() != grads.len() {
        return Err(TensorError::ParamCountMismatch {
            params: params.len(),
            grads: grads.len(),
        });
    }
    for (param, grad) in params.iter_mut().zip(grads) {
        let Some(g) = grad else { continue };
        if g.shape() != param.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "sgd_step",
                lhs: param.shape(),
                rhs: g.shape(),
            });
        }
        param.add_assign_scaled(g, -lr);
    }
    Ok(())
}

/// Optimizer selection plus its persistent state.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(AdamState),
    Sgd,
}

impl Optimizer {
    pub fn adam(shapes: &[(usize, usize)]) -> Self {
        Optimizer::Adam(AdamState::new(shapes))
    }

    pub fn step(
        &mut self,
        params: &mut [&mut Matrix],
        grads: &[Option<Matrix>],
        lr: f64,
    ) -> Result<(), TensorError> {
        match self {
            Optimizer::Adam(state) => {
                adam_step(params, grads, state, lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)
            }
            Optimizer::Sgd => sgd_step(params, grads, lr),
        }
    }
}
