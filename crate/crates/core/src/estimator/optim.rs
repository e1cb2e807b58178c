//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// First/second moment buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamWState<T> {
    pub fn zeros_like(shapes: &[usize]) -> Self {
        Self {
            step: 0,
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }
}

/// One AdamW update over a list of parameter tensors:
/// `w ← w − lr·(m̂/(√v̂ + ε) + wd·w)`.
pub fn adamw_step<T: Scalar>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    state: &mut AdamWState<T>,
    lr: T,
    config: &AdamWConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameter tensors, {} gradients, {} optimizer slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(Error::ShapeMismatch(format!(
                "tensor {i}: {} params, {} grads, {} moments",
                p.len(),
                g.len(),
                state.m[i].len()
            )));
        }
    }
    state.step += 1;
    let b1 = T::lit(config.beta1);
    let b2 = T::lit(config.beta2);
    let eps = T::lit(config.eps);
    let wd = T::lit(config.weight_decay);
    let t = state.step as i32;
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);

    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.len() {
            let gj = g[j];
            m[j] = b1 * m[j] + (T::one() - b1) * gj;
            v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] = p[j] - lr * (m_hat / (v_hat.sqrt() + eps) + wd * p[j]);
        }
    }
    Ok(())
}
