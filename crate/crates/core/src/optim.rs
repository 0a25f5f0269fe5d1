//! Losses and parameter update rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f32 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f32,
    pub grad: Tensor,
}

/// Mean squared error, reduced by mean over all elements.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<LossValue> {
    target.expect_dims("mse_loss", pred.dims())?;
    let n = pred.len() as f32;
    let mut sum = 0.0f32;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            sum += d * d;
            2.0 * d / n
        })
        .collect();
    Ok(LossValue {
        value: sum / n,
        grad: Tensor::new(pred.dims(), grad)?,
    })
}

/// Binary cross-entropy on probabilities; labels must be exactly 0 or 1.
pub fn bce_loss(prob: &Tensor, label: &Tensor) -> Result<LossValue> {
    label.expect_dims("bce_loss", prob.dims())?;
    if let Some(bad) = label.data().iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Validation(format!("bce label must be 0 or 1, got {bad}")));
    }
    let n = prob.len() as f32;
    let mut sum = 0.0f32;
    let grad = prob
        .data()
        .iter()
        .zip(label.data())
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            sum += if y == 1.0 { -p.ln() } else { -(1.0 - p).ln() };
            (p - y) / (p * (1.0 - p)) / n
        })
        .collect();
    Ok(LossValue {
        value: sum / n,
        grad: Tensor::new(prob.dims(), grad)?,
    })
}

fn check_pairs(params: &[Tensor], grads: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::dim("optimizer", &[params.len()], &[grads.len()]));
    }
    for (p, g) in params.iter().zip(grads) {
        g.expect_dims("optimizer", p.dims())?;
    }
    Ok(())
}

/// Plain gradient descent: `p ← p − lr·g`.
pub fn sgd_step(params: &mut [Tensor], grads: &[Tensor], lr: f32) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::Validation(format!("learning rate must be positive, got {lr}")));
    }
    check_pairs(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(params: &[Tensor], hyper: AdamHyper) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.dims())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
            hyper,
        }
    }
}

/// One bias-corrected Adam update. `t` is incremented before the correction
/// factors are computed.
pub fn adam_step(state: &mut AdamState, params: &mut [Tensor], grads: &[Tensor], lr: f32) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::Validation(format!("learning rate must be positive, got {lr}")));
    }
    check_pairs(params, grads)?;
    if state.m.len() != params.len() {
        return Err(Error::dim("adam_step", &[state.m.len()], &[params.len()]));
    }
    for (p, m) in params.iter().zip(&state.m) {
        m.expect_dims("adam_step", p.dims())?;
    }
    state.t += 1;
    let AdamHyper { beta1, beta2, epsilon } = state.hyper;
    let t = state.t.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mv = beta1 * *mv + (1.0 - beta1) * gv;
            *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}
