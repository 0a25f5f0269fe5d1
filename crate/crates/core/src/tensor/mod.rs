//! Dense row-major `f32` tensors and the forward/backward kernels the
//! autoencoder is assembled from.
//!
//! Kernels work on single samples laid out as `[channels, height, width]`;
//! batching is the caller's job. Every kernel is a pure function of its
//! inputs and accumulates in a fixed order, so repeated calls are
//! bit-identical.

mod activation;
mod blocked;
mod conv;
mod dense;
mod pool;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar, Activation};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvParams};
pub(crate) use conv::conv2d_backward_params;
pub use dense::{dense, dense_backward, DenseGrads};
pub use pool::{maxpool2d, maxpool2d_backward, upsample_nearest, upsample_nearest_backward, PoolCache};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: &[usize], data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::Validation(format!(
                "tensor dims must be non-empty and positive, got {dims:?}"
            )));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Validation(format!(
                "tensor dims {dims:?} need {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Panics if any dim is zero.
    pub fn zeros(dims: &[usize]) -> Self {
        Self::full(dims, 0.0)
    }

    pub fn full(dims: &[usize], value: f32) -> Self {
        assert!(
            !dims.is_empty() && dims.iter().all(|&d| d > 0),
            "invalid tensor dims {dims:?}"
        );
        let n = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize) -> f32) -> Self {
        let mut t = Self::zeros(dims);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = f(i);
        }
        t
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.iter().any(|&d| d == 0) || n != self.data.len() {
            return Err(Error::dim("reshape", &self.dims, dims));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    /// Element of a rank-3 tensor.
    pub fn at3(&self, c: usize, y: usize, x: usize) -> f32 {
        let (h, w) = (self.dims[1], self.dims[2]);
        self.data[(c * h + y) * w + x]
    }

    /// Sub-tensor `index` along the leading axis (e.g. one sample of a batch).
    pub fn slice_outer(&self, index: usize) -> Tensor {
        let inner: usize = self.dims[1..].iter().product();
        let data = self.data[index * inner..(index + 1) * inner].to_vec();
        Tensor {
            dims: self.dims[1..].to_vec(),
            data,
        }
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::Validation("cannot stack zero tensors".into()))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.dims != first.dims {
                return Err(Error::dim("stack", &first.dims, &t.dims));
            }
            data.extend_from_slice(&t.data);
        }
        let mut dims = vec![items.len()];
        dims.extend_from_slice(&first.dims);
        Ok(Tensor { dims, data })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::dim("add", &self.dims, &other.dims));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f32) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn sum(&self) -> f32 {
        self.data.iter().sum()
    }

    pub(crate) fn expect_rank(&self, op: &'static str, rank: usize) -> Result<()> {
        if self.rank() != rank {
            return Err(Error::Validation(format!(
                "{op}: expected a rank-{rank} tensor, got dims {:?}",
                self.dims
            )));
        }
        Ok(())
    }

    pub(crate) fn expect_dims(&self, op: &'static str, dims: &[usize]) -> Result<()> {
        if self.dims != dims {
            return Err(Error::dim(op, dims, &self.dims));
        }
        Ok(())
    }
}
