use super::Tensor;
use crate::error::{Error, Result};

/// Flat input index of the maximum of every pooling window, plus the input
/// shape needed to rebuild the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolCache {
    input_dims: Vec<usize>,
    argmax: Vec<u32>,
}

impl PoolCache {
    pub fn argmax(&self) -> &[u32] {
        &self.argmax
    }
}

/// 2×2 max pooling with stride 2. Ties go to the first element in row-major
/// scan order of the window.
pub fn maxpool2d(input: &Tensor) -> Result<(Tensor, PoolCache)> {
    input.expect_rank("maxpool2d", 3)?;
    let (c, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dim("maxpool2d", &[c, h + h % 2, w + w % 2], input.dims()));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for xo in 0..ow {
                let mut best_idx = (ch * h + 2 * y) * w + 2 * xo;
                let mut best = x[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (ch * h + 2 * y + dy) * w + 2 * xo + dx;
                    if x[idx] > best {
                        best = x[idx];
                        best_idx = idx;
                    }
                }
                out.push(best);
                argmax.push(best_idx as u32);
            }
        }
    }
    let out = Tensor::new(&[c, oh, ow], out)?;
    Ok((
        out,
        PoolCache {
            input_dims: input.dims().to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool2d_backward(grad_out: &Tensor, cache: &PoolCache) -> Result<Tensor> {
    let d = &cache.input_dims;
    grad_out.expect_dims("maxpool2d_backward", &[d[0], d[1] / 2, d[2] / 2])?;
    let mut grad = Tensor::zeros(d);
    let gi = grad.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
        gi[idx as usize] += g;
    }
    Ok(grad)
}

/// Nearest-neighbour upsampling: every input cell becomes a
/// `factor × factor` block.
pub fn upsample_nearest(input: &Tensor, factor: usize) -> Result<Tensor> {
    input.expect_rank("upsample_nearest", 3)?;
    if factor == 0 {
        return Err(Error::Validation("upsample factor must be at least 1".into()));
    }
    let (c, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    let (oh, ow) = (h * factor, w * factor);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            let row = &x[(ch * h + y / factor) * w..(ch * h + y / factor + 1) * w];
            for xo in 0..ow {
                out.push(row[xo / factor]);
            }
        }
    }
    Tensor::new(&[c, oh, ow], out)
}

/// Each input cell receives the sum of the gradients of its replicas, added
/// in row-major order.
pub fn upsample_nearest_backward(grad_out: &Tensor, factor: usize) -> Result<Tensor> {
    grad_out.expect_rank("upsample_nearest_backward", 3)?;
    if factor == 0 {
        return Err(Error::Validation("upsample factor must be at least 1".into()));
    }
    let (c, oh, ow) = (grad_out.dims()[0], grad_out.dims()[1], grad_out.dims()[2]);
    if oh % factor != 0 || ow % factor != 0 {
        return Err(Error::dim(
            "upsample_nearest_backward",
            &[c, oh - oh % factor, ow - ow % factor],
            grad_out.dims(),
        ));
    }
    let (h, w) = (oh / factor, ow / factor);
    let mut grad = Tensor::zeros(&[c, h, w]);
    let gi = grad.data_mut();
    let g = grad_out.data();
    for ch in 0..c {
        for y in 0..oh {
            let dst = &mut gi[(ch * h + y / factor) * w..(ch * h + y / factor + 1) * w];
            let src = &g[(ch * oh + y) * ow..(ch * oh + y + 1) * ow];
            for (xo, &v) in src.iter().enumerate() {
                dst[xo / factor] += v;
            }
        }
    }
    Ok(grad)
}
