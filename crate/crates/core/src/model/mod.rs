//! Convolutional autoencoder: configurable encoder/decoder stacks, an
//! optional classification head on the latent code, and the binary
//! checkpoint format.
//!
//! Every convolution is 3×3 with stride 1 and padding 1, followed by ReLU,
//! except the final single-channel output convolution which feeds a sigmoid.
//! The latent code is the ReLU output of the last encoder convolution.

mod checkpoint;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use serde::{Deserialize, Serialize};

use crate::data::SeededRng;
use crate::error::{Error, Result};
use crate::tensor::{
    conv2d_backward, conv2d_backward_params, conv2d_forward, dense, dense_backward, maxpool2d, maxpool2d_backward, relu, relu_backward,
    sigmoid, sigmoid_backward, upsample_nearest, upsample_nearest_backward, Activation, ConvParams, PoolCache,
    Tensor,
};

pub const KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// 3×3 convolution with this many output channels, then ReLU.
    Conv(usize),
    /// 2×2 max pooling (encoder only).
    Pool,
    /// 2× nearest-neighbour upsampling (decoder only).
    Upsample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Side of the square single-channel input.
    pub input_size: usize,
    pub encoder: Vec<Stage>,
    pub latent_channels: usize,
    pub decoder: Vec<Stage>,
    pub classifier_head: Option<HeadConfig>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            encoder: vec![Stage::Conv(16), Stage::Pool, Stage::Conv(32), Stage::Pool],
            latent_channels: 8,
            decoder: vec![Stage::Upsample, Stage::Conv(32), Stage::Upsample, Stage::Conv(16)],
            classifier_head: None,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let pools = self.encoder.iter().filter(|s| **s == Stage::Pool).count();
        let ups = self.decoder.iter().filter(|s| **s == Stage::Upsample).count();
        if self.encoder.contains(&Stage::Upsample) {
            return Err(Error::Config("encoder may not contain upsample stages".into()));
        }
        if self.decoder.contains(&Stage::Pool) {
            return Err(Error::Config("decoder may not contain pool stages".into()));
        }
        if pools != ups {
            return Err(Error::Config(format!(
                "decoder must mirror encoder: {pools} pool stages vs {ups} upsample stages"
            )));
        }
        if self.input_size == 0 || pools >= usize::BITS as usize || self.input_size % (1usize << pools) != 0 {
            return Err(Error::Config(format!(
                "input size {} is not divisible by 2^{pools}",
                self.input_size
            )));
        }
        let zero_conv = self
            .encoder
            .iter()
            .chain(&self.decoder)
            .any(|s| *s == Stage::Conv(0));
        if zero_conv || self.latent_channels == 0 {
            return Err(Error::Config("convolution channel counts must be positive".into()));
        }
        if matches!(self.classifier_head, Some(HeadConfig { hidden: 0 })) {
            return Err(Error::Config("classifier head needs at least one hidden unit".into()));
        }
        Ok(())
    }

    pub fn pool_count(&self) -> usize {
        self.encoder.iter().filter(|s| **s == Stage::Pool).count()
    }

    pub fn latent_size(&self) -> usize {
        self.input_size >> self.pool_count()
    }
}

/// Recorded alongside the parameters in a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub final_loss: f32,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    /// Weight at `param`, bias at `param + 1`.
    Conv { param: usize, act: Activation },
    Pool,
    Upsample,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeadParams {
    hidden_w: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    config: ModelConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
    ops: Vec<Op>,
    /// Number of ops whose composition yields the latent code.
    latent_ops: usize,
    head: Option<HeadParams>,
    pub meta: TrainingMeta,
}

enum Init {
    He,
    Glorot,
}

struct Layout {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    inits: Vec<Init>,
    ops: Vec<Op>,
    latent_ops: usize,
    head: Option<HeadParams>,
}

fn layout(config: &ModelConfig) -> Result<Layout> {
    config.validate()?;
    let mut l = Layout {
        names: vec![],
        shapes: vec![],
        inits: vec![],
        ops: vec![],
        latent_ops: 0,
        head: None,
    };
    let mut channels = 1;
    let push_conv = |l: &mut Layout, name: String, c_in: usize, c_out: usize, act: Activation| {
        l.ops.push(Op::Conv {
            param: l.names.len(),
            act,
        });
        l.names.push(format!("{name}.weight"));
        l.names.push(format!("{name}.bias"));
        l.shapes.push(vec![c_out, c_in, KERNEL, KERNEL]);
        l.shapes.push(vec![c_out]);
        l.inits.push(match act {
            Activation::Relu => Init::He,
            Activation::Sigmoid => Init::Glorot,
        });
        l.inits.push(Init::He);
    };
    for (i, stage) in config.encoder.iter().enumerate() {
        match *stage {
            Stage::Conv(c) => {
                push_conv(&mut l, format!("encoder.{i}"), channels, c, Activation::Relu);
                channels = c;
            }
            Stage::Pool => l.ops.push(Op::Pool),
            Stage::Upsample => unreachable!("validated"),
        }
    }
    push_conv(&mut l, "latent".into(), channels, config.latent_channels, Activation::Relu);
    channels = config.latent_channels;
    l.latent_ops = l.ops.len();
    for (i, stage) in config.decoder.iter().enumerate() {
        match *stage {
            Stage::Conv(c) => {
                push_conv(&mut l, format!("decoder.{i}"), channels, c, Activation::Relu);
                channels = c;
            }
            Stage::Upsample => l.ops.push(Op::Upsample),
            Stage::Pool => unreachable!("validated"),
        }
    }
    push_conv(&mut l, "output".into(), channels, 1, Activation::Sigmoid);
    if let Some(head) = config.classifier_head {
        l.head = Some(HeadParams {
            hidden_w: l.names.len(),
        });
        for (name, shape, init) in [
            ("head.hidden.weight", vec![head.hidden, config.latent_channels], Init::He),
            ("head.hidden.bias", vec![head.hidden], Init::He),
            ("head.output.weight", vec![1, head.hidden], Init::Glorot),
            ("head.output.bias", vec![1], Init::Glorot),
        ] {
            l.names.push(name.into());
            l.shapes.push(shape);
            l.inits.push(init);
        }
    }
    Ok(l)
}

/// `(fan_in, fan_out)` of a conv kernel `[c_out, c_in, kh, kw]` or dense
/// weight `[out, in]`.
fn fans(shape: &[usize]) -> (usize, usize) {
    let receptive: usize = shape[2..].iter().product();
    (shape[1] * receptive, shape[0] * receptive)
}

/// Per-sample record of everything backward needs.
#[derive(Debug, Clone)]
pub struct SampleTrace {
    inputs: Vec<Tensor>,
    outputs: Vec<Option<Tensor>>,
    pools: Vec<Option<PoolCache>>,
    latent_at: usize,
    pub reconstruction: Tensor,
}

impl SampleTrace {
    /// The latent code: output of the last encoder op.
    pub fn latent(&self) -> &Tensor {
        self.inputs.get(self.latent_at).unwrap_or(&self.reconstruction)
    }
}

/// Intermediate values of the classifier head for one sample.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    pooled: Tensor,
    hidden: Tensor,
    pub prob: f32,
}

/// Batch forward result.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub reconstruction: Tensor,
    pub latent: Tensor,
    pub traces: Vec<SampleTrace>,
}

pub fn build(config: &ModelConfig) -> Result<AutoencoderModel> {
    AutoencoderModel::build(config)
}

impl AutoencoderModel {
    pub fn build(config: &ModelConfig) -> Result<Self> {
        let l = layout(config)?;
        let mut rng = SeededRng::new(config.seed);
        let params = l
            .shapes
            .iter()
            .zip(&l.inits)
            .map(|(shape, init)| {
                if shape.len() == 1 {
                    return Tensor::zeros(shape);
                }
                let (fan_in, fan_out) = fans(shape);
                match init {
                    Init::He => {
                        let std = (2.0 / fan_in as f64).sqrt();
                        Tensor::from_fn(shape, |_| (std * rng.normal()) as f32)
                    }
                    Init::Glorot => {
                        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        Tensor::from_fn(shape, |_| rng.uniform_range(-limit, limit) as f32)
                    }
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            names: l.names,
            params,
            ops: l.ops,
            latent_ops: l.latent_ops,
            head: l.head,
            meta: TrainingMeta::default(),
        })
    }

    /// Rebuilds a model from a config and explicit parameter tensors, checking
    /// every shape against the config.
    pub fn from_parts(config: &ModelConfig, params: Vec<(String, Tensor)>) -> Result<Self> {
        let l = layout(config)?;
        if params.len() != l.names.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, got {}",
                l.names.len(),
                params.len()
            )));
        }
        let mut tensors = Vec::with_capacity(params.len());
        for ((name, tensor), (want_name, want_shape)) in params.into_iter().zip(l.names.iter().zip(&l.shapes)) {
            if &name != want_name {
                return Err(Error::Config(format!("expected parameter {want_name:?}, found {name:?}")));
            }
            if tensor.dims() != want_shape.as_slice() {
                return Err(Error::dim("from_parts", want_shape, tensor.dims()));
            }
            tensors.push(tensor);
        }
        Ok(Self {
            config: config.clone(),
            names: l.names,
            params: tensors,
            ops: l.ops,
            latent_ops: l.latent_ops,
            head: l.head,
            meta: TrainingMeta::default(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn input_dims(&self) -> [usize; 3] {
        [1, self.config.input_size, self.config.input_size]
    }

    pub fn latent_dims(&self) -> [usize; 3] {
        let s = self.config.latent_size();
        [self.config.latent_channels, s, s]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn has_head(&self) -> bool {
        self.head.is_some()
    }

    /// Indices of the classifier-head parameters (empty without a head).
    pub fn head_param_range(&self) -> std::ops::Range<usize> {
        match self.head {
            Some(h) => h.hidden_w..h.hidden_w + 4,
            None => self.params.len()..self.params.len(),
        }
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| Tensor::zeros(p.dims())).collect()
    }

    fn conv_params(&self, param: usize) -> ConvParams {
        ConvParams {
            kernels: self.params[param].clone(),
            bias: self.params[param + 1].clone(),
            stride: 1,
            padding: KERNEL / 2,
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        x.expect_dims("autoencoder", &self.input_dims())
    }

    /// Forward pass for one `[1, H, W]` image, keeping what backward needs.
    pub fn forward_sample(&self, x: &Tensor) -> Result<SampleTrace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.ops.len() + 1);
        let mut outputs = Vec::with_capacity(self.ops.len());
        let mut pools = Vec::with_capacity(self.ops.len());
        let mut cur = x.clone();
        for op in &self.ops {
            let (next, out, pool) = match *op {
                Op::Conv { param, act } => {
                    let p = self.conv_params(param);
                    let y = act.forward(&conv2d_forward(&cur, &p)?);
                    (y.clone(), Some(y), None)
                }
                Op::Pool => {
                    let (y, cache) = maxpool2d(&cur)?;
                    (y, None, Some(cache))
                }
                Op::Upsample => (upsample_nearest(&cur, 2)?, None, None),
            };
            inputs.push(std::mem::replace(&mut cur, next));
            outputs.push(out);
            pools.push(pool);
        }
        Ok(SampleTrace {
            inputs,
            outputs,
            pools,
            latent_at: self.latent_ops,
            reconstruction: cur,
        })
    }

    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_sample(x)?.reconstruction)
    }

    /// Batch forward over `[B, 1, H, W]`.
    pub fn forward(&self, batch: &Tensor) -> Result<ForwardOutput> {
        batch.expect_rank("autoencoder", 4)?;
        let traces = (0..batch.dims()[0])
            .map(|b| self.forward_sample(&batch.slice_outer(b)))
            .collect::<Result<Vec<_>>>()?;
        let recon: Vec<Tensor> = traces.iter().map(|t| t.reconstruction.clone()).collect();
        let latent: Vec<Tensor> = traces.iter().map(|t| t.latent().clone()).collect();
        Ok(ForwardOutput {
            reconstruction: Tensor::stack(&recon)?,
            latent: Tensor::stack(&latent)?,
            traces,
        })
    }

    /// Backpropagates `grad_recon` (gradient w.r.t. the reconstruction) and an
    /// optional extra gradient arriving at the latent code, accumulating
    /// parameter gradients into `grads`.
    pub fn backward_sample(
        &self,
        trace: &SampleTrace,
        grad_recon: &Tensor,
        grad_latent: Option<&Tensor>,
        grads: &mut [Tensor],
    ) -> Result<()> {
        grad_recon.expect_dims("autoencoder_backward", trace.reconstruction.dims())?;
        if grads.len() != self.params.len() {
            return Err(Error::dim("autoencoder_backward", &[self.params.len()], &[grads.len()]));
        }
        let mut g = grad_recon.clone();
        for k in (0..self.ops.len()).rev() {
            if k + 1 == self.latent_ops {
                if let Some(extra) = grad_latent {
                    g.add_assign(extra)?;
                }
            }
            let input = &trace.inputs[k];
            g = match self.ops[k] {
                Op::Conv { param, act } => {
                    let out = trace.outputs[k].as_ref().expect("conv output cached");
                    let pre_grad = match act {
                        Activation::Relu => relu_backward(&g, out)?,
                        Activation::Sigmoid => sigmoid_backward(&g, out)?,
                    };
                    let p = self.conv_params(param);
                    if k == 0 {
                        let (gk, gb) = conv2d_backward_params(&pre_grad, input, &p)?;
                        grads[param].add_assign(&gk)?;
                        grads[param + 1].add_assign(&gb)?;
                        return Ok(());
                    }
                    let cg = conv2d_backward(&pre_grad, input, &p)?;
                    grads[param].add_assign(&cg.kernels)?;
                    grads[param + 1].add_assign(&cg.bias)?;
                    cg.input
                }
                Op::Pool => maxpool2d_backward(&g, trace.pools[k].as_ref().expect("pool cache"))?,
                Op::Upsample => upsample_nearest_backward(&g, 2)?,
            };
        }
        Ok(())
    }

    fn head(&self) -> Result<HeadParams> {
        self.head
            .ok_or_else(|| Error::Unsupported("model has no classifier head".into()))
    }

    /// Classifier head on a `[C, h, w]` latent: global average pool, dense,
    /// ReLU, dense to one unit, sigmoid.
    pub fn forward_head(&self, latent: &Tensor) -> Result<HeadTrace> {
        let h = self.head()?;
        latent.expect_dims("classifier_head", &self.latent_dims())?;
        let c = latent.dims()[0];
        let area = (latent.dims()[1] * latent.dims()[2]) as f32;
        let pooled: Vec<f32> = latent
            .data()
            .chunks_exact(latent.len() / c)
            .map(|plane| plane.iter().sum::<f32>() / area)
            .collect();
        let pooled = Tensor::new(&[c], pooled)?;
        let hidden = relu(&dense(&pooled, &self.params[h.hidden_w], &self.params[h.hidden_w + 1])?);
        let logit = dense(&hidden, &self.params[h.hidden_w + 2], &self.params[h.hidden_w + 3])?;
        let prob = sigmoid(&logit).data()[0];
        Ok(HeadTrace { pooled, hidden, prob })
    }

    /// Backpropagates `d loss / d prob` through the head, accumulating head
    /// parameter gradients and returning the gradient at the latent code.
    pub fn backward_head(&self, trace: &HeadTrace, grad_prob: f32, grads: &mut [Tensor]) -> Result<Tensor> {
        let h = self.head()?;
        let [c, lh, lw] = self.latent_dims();
        let s = trace.prob;
        let g_logit = Tensor::new(&[1], vec![grad_prob * s * (1.0 - s)])?;
        let out = dense_backward(&g_logit, &trace.hidden, &self.params[h.hidden_w + 2], &self.params[h.hidden_w + 3])?;
        grads[h.hidden_w + 2].add_assign(&out.weights)?;
        grads[h.hidden_w + 3].add_assign(&out.bias)?;
        let g_hidden = relu_backward(&out.input, &trace.hidden)?;
        let hid = dense_backward(&g_hidden, &trace.pooled, &self.params[h.hidden_w], &self.params[h.hidden_w + 1])?;
        grads[h.hidden_w].add_assign(&hid.weights)?;
        grads[h.hidden_w + 1].add_assign(&hid.bias)?;
        let area = (lh * lw) as f32;
        let mut g_latent = Tensor::zeros(&[c, lh, lw]);
        for (plane, &gp) in g_latent.data_mut().chunks_exact_mut(lh * lw).zip(hid.input.data()) {
            plane.fill(gp / area);
        }
        Ok(g_latent)
    }
}

/// Probability from the classifier head for a latent code.
pub fn forward_classifier(model: &AutoencoderModel, latent: &Tensor) -> Result<f32> {
    Ok(model.forward_head(latent)?.prob)
}
