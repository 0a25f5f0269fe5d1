use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

fn check(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    input.expect_rank("dense", 1)?;
    weights.expect_rank("dense", 2)?;
    let (m, n) = (weights.dims()[0], weights.dims()[1]);
    if input.len() != n {
        return Err(Error::dim("dense", &[n], input.dims()));
    }
    bias.expect_dims("dense", &[m])?;
    Ok((m, n))
}

/// `weights · input + bias` with weights laid out `[out, in]`.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (m, n) = check(input, weights, bias)?;
    let x = input.data();
    let out = (0..m)
        .map(|r| {
            let row = &weights.data()[r * n..(r + 1) * n];
            let acc: f32 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            acc + bias.data()[r]
        })
        .collect();
    Tensor::new(&[m], out)
}

pub fn dense_backward(grad_out: &Tensor, input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<DenseGrads> {
    let (m, n) = check(input, weights, bias)?;
    grad_out.expect_dims("dense_backward", &[m])?;
    let g = grad_out.data();
    let x = input.data();
    let w = weights.data();
    let mut gi = vec![0.0f32; n];
    let mut gw = vec![0.0f32; m * n];
    for r in 0..m {
        for c in 0..n {
            gi[c] += w[r * n + c] * g[r];
            gw[r * n + c] = g[r] * x[c];
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(&[n], gi)?,
        weights: Tensor::new(&[m, n], gw)?,
        bias: grad_out.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input_through() {
        let x = Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let w = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let y = dense(&x, &w, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn small_affine_case() {
        let x = Tensor::new(&[2], vec![3.0, 4.0]).unwrap();
        let w = Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(&[1], vec![0.5]).unwrap();
        assert_eq!(dense(&x, &w, &b).unwrap().data(), &[11.5]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let x = Tensor::zeros(&[3]);
        let w = Tensor::zeros(&[2, 2]);
        assert!(matches!(
            dense(&x, &w, &Tensor::zeros(&[2])),
            Err(Error::Dimension { .. })
        ));
    }
}
