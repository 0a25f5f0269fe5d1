use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn forward(self, x: &Tensor) -> Tensor {
        match self {
            Activation::Relu => relu(x),
            Activation::Sigmoid => sigmoid(x),
        }
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Passes the gradient where the pre-activation is strictly positive.
pub fn relu_backward(grad_out: &Tensor, pre: &Tensor) -> Result<Tensor> {
    grad_out.expect_dims("relu_backward", pre.dims())?;
    let data = grad_out
        .data()
        .iter()
        .zip(pre.data())
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(pre.dims(), data)
}

/// Logistic function, evaluated through `exp(-|x|)` so neither branch
/// overflows.
pub fn sigmoid_scalar(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Takes the sigmoid *output* `s`; the local derivative is `s·(1−s)`.
pub fn sigmoid_backward(grad_out: &Tensor, out: &Tensor) -> Result<Tensor> {
    grad_out.expect_dims("sigmoid_backward", out.dims())?;
    let data = grad_out
        .data()
        .iter()
        .zip(out.data())
        .map(|(&g, &s)| g * s * (1.0 - s))
        .collect();
    Tensor::new(out.dims(), data)
}
