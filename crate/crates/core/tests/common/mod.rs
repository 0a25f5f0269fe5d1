//! Independent reference implementations used as test oracles. Nothing here
//! calls the kernels under test; forward passes are re-derived in f64 with
//! naive loops.

#![allow(dead_code)]

pub mod cli;
pub mod grad;

use aecnn::data::SeededRng;
use aecnn::model::{AutoencoderModel, ModelConfig, Stage};
use aecnn::tensor::Tensor;

pub fn rand_vec(rng: &mut SeededRng, n: usize, lo: f64, hi: f64) -> Vec<f32> {
    (0..n).map(|_| rng.uniform_range(lo, hi) as f32).collect()
}

pub fn rand_tensor(rng: &mut SeededRng, dims: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = dims.iter().product();
    Tensor::new(dims, rand_vec(rng, n, lo, hi)).unwrap()
}

pub fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

/// Six-loop f32 convolution: channels, kernel rows, kernel columns summed
/// from zero, out-of-range taps skipped, bias added last.
pub fn conv_naive_f32(x: &Tensor, k: &Tensor, b: &[f32], stride: usize, pad: usize) -> Tensor {
    let (c_in, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    let (c_out, kh, kw) = (k.dims()[0], k.dims()[2], k.dims()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0f32; c_out * oh * ow];
    for o in 0..c_out {
        for y in 0..oh {
            for xo in 0..ow {
                let mut acc = 0.0f32;
                for c in 0..c_in {
                    for i in 0..kh {
                        for j in 0..kw {
                            let iy = (y * stride + i) as isize - pad as isize;
                            let ix = (xo * stride + j) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += x.data()[(c * h + iy as usize) * w + ix as usize]
                                * k.data()[((o * c_in + c) * kh + i) * kw + j];
                        }
                    }
                }
                out[(o * oh + y) * ow + xo] = acc + b[o];
            }
        }
    }
    Tensor::new(&[c_out, oh, ow], out).unwrap()
}

/// `[C, H, W]` image held in f64.
#[derive(Clone, Debug)]
pub struct Img {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Img {
    pub fn from_tensor(t: &Tensor) -> Self {
        let d = t.dims();
        Img {
            c: d[0],
            h: d[1],
            w: d[2],
            v: to_f64(t),
        }
    }

    fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.v[(c * self.h + y) * self.w + x]
    }
}

pub fn conv_f64(x: &Img, k: &[f64], k_dims: [usize; 4], b: &[f64], stride: usize, pad: usize) -> Img {
    let [c_out, c_in, kh, kw] = k_dims;
    assert_eq!(c_in, x.c);
    let oh = (x.h + 2 * pad - kh) / stride + 1;
    let ow = (x.w + 2 * pad - kw) / stride + 1;
    let mut v = vec![0.0; c_out * oh * ow];
    for o in 0..c_out {
        for y in 0..oh {
            for xo in 0..ow {
                let mut acc = b[o];
                for c in 0..c_in {
                    for i in 0..kh {
                        for j in 0..kw {
                            let iy = (y * stride + i) as isize - pad as isize;
                            let ix = (xo * stride + j) as isize - pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < x.h && (ix as usize) < x.w {
                                acc += x.at(c, iy as usize, ix as usize) * k[((o * c_in + c) * kh + i) * kw + j];
                            }
                        }
                    }
                }
                v[(o * oh + y) * ow + xo] = acc;
            }
        }
    }
    Img { c: c_out, h: oh, w: ow, v }
}

pub fn maxpool_f64(x: &Img) -> Img {
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut v = Vec::with_capacity(x.c * oh * ow);
    for c in 0..x.c {
        for y in 0..oh {
            for xo in 0..ow {
                let m = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|&(dy, dx)| x.at(c, 2 * y + dy, 2 * xo + dx))
                    .fold(f64::NEG_INFINITY, f64::max);
                v.push(m);
            }
        }
    }
    Img { c: x.c, h: oh, w: ow, v }
}

pub fn upsample_f64(x: &Img, f: usize) -> Img {
    let (h, w) = (x.h * f, x.w * f);
    let mut v = Vec::with_capacity(x.c * h * w);
    for c in 0..x.c {
        for y in 0..h {
            for xo in 0..w {
                v.push(x.at(c, y / f, xo / f));
            }
        }
    }
    Img { c: x.c, h, w, v }
}

pub fn relu_f64(v: f64) -> f64 {
    v.max(0.0)
}

pub fn sigmoid_f64(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn dense_f64(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len();
    b.iter()
        .enumerate()
        .map(|(r, &bias)| bias + (0..n).map(|c| w[r * n + c] * x[c]).sum::<f64>())
        .collect()
}

pub fn mse_f64(p: &[f64], t: &[f64]) -> f64 {
    p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64
}

pub fn bce_f64(p: &[f64], y: &[f64]) -> f64 {
    p.iter()
        .zip(y)
        .map(|(&p, &y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
        .sum::<f64>()
        / p.len() as f64
}

/// Autoencoder forward in f64 from the architecture description alone;
/// returns `(reconstruction, latent)`.
pub fn ae_forward_f64(cfg: &ModelConfig, params: &[(Vec<usize>, Vec<f64>)], x: &Img) -> (Img, Img) {
    let mut p = 0;
    let mut conv = |cur: &Img, sigmoid: bool| {
        let (kd, k) = &params[p];
        let (_, b) = &params[p + 1];
        p += 2;
        let mut y = conv_f64(cur, k, [kd[0], kd[1], kd[2], kd[3]], b, 1, kd[2] / 2);
        for v in &mut y.v {
            *v = if sigmoid { sigmoid_f64(*v) } else { relu_f64(*v) };
        }
        y
    };
    let mut cur = x.clone();
    for s in &cfg.encoder {
        cur = match s {
            Stage::Conv(_) => conv(&cur, false),
            Stage::Pool => maxpool_f64(&cur),
            Stage::Upsample => unreachable!(),
        };
    }
    cur = conv(&cur, false);
    let latent = cur.clone();
    for s in &cfg.decoder {
        cur = match s {
            Stage::Conv(_) => conv(&cur, false),
            Stage::Upsample => upsample_f64(&cur, 2),
            Stage::Pool => unreachable!(),
        };
    }
    (conv(&cur, true), latent)
}

/// Classifier head in f64: global average pool, dense, ReLU, dense, sigmoid.
pub fn head_f64(head: &[(Vec<usize>, Vec<f64>)], latent: &Img) -> f64 {
    let area = (latent.h * latent.w) as f64;
    let pooled: Vec<f64> = latent.v.chunks(latent.h * latent.w).map(|p| p.iter().sum::<f64>() / area).collect();
    let hidden: Vec<f64> = dense_f64(&pooled, &head[0].1, &head[1].1).into_iter().map(relu_f64).collect();
    sigmoid_f64(dense_f64(&hidden, &head[2].1, &head[3].1)[0])
}

pub fn model_params_f64(model: &AutoencoderModel) -> Vec<(Vec<usize>, Vec<f64>)> {
    model.params().iter().map(|t| (t.dims().to_vec(), to_f64(t))).collect()
}

/// Result of comparing an analytic gradient with central differences.
#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub max_rel: f64,
    pub checked: usize,
    /// Coordinates skipped because the loss has a kink within the step.
    pub skipped: usize,
}

impl GradCheck {
    pub fn merge(self, o: GradCheck) -> GradCheck {
        GradCheck {
            max_rel: self.max_rel.max(o.max_rel),
            checked: self.checked + o.checked,
            skipped: self.skipped + o.skipped,
        }
    }
}

pub const FD_STEP: f64 = 1e-6;
/// Gradients smaller than this in magnitude are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

/// Compares `analytic[i]` with the central difference of `loss` in
/// coordinate `i` of `point`. A coordinate whose one-sided differences
/// disagree sits on a ReLU or max kink and is skipped.
pub fn check_grad(point: &[f64], analytic: &[f32], mut loss: impl FnMut(&[f64]) -> f64) -> GradCheck {
    assert_eq!(point.len(), analytic.len());
    let mut x = point.to_vec();
    let f0 = loss(&x);
    let mut out = GradCheck::default();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let fp = loss(&x);
        x[i] = orig - FD_STEP;
        let fm = loss(&x);
        x[i] = orig;
        let (fwd, bwd) = ((fp - f0) / FD_STEP, (f0 - fm) / FD_STEP);
        if (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()).max(1e-3) {
            out.skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * FD_STEP);
        let a = analytic[i] as f64;
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        out.max_rel = out.max_rel.max(rel);
        out.checked += 1;
    }
    out
}

/// Pairwise Mann–Whitney estimate of AUC with ties counted as one half.
pub fn mann_whitney(pairs: &[(f64, bool)]) -> f64 {
    let pos: Vec<f64> = pairs.iter().filter(|p| p.1).map(|p| p.0).collect();
    let neg: Vec<f64> = pairs.iter().filter(|p| !p.1).map(|p| p.0).collect();
    let mut s = 0.0;
    for &p in &pos {
        for &n in &neg {
            s += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    s / (pos.len() * neg.len()) as f64
}

/// Lower order statistic `sorted[ceil(q·n) − 1]`, by sorting.
pub fn percentile_oracle(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    // Smallest k (1-based) with k/n >= q, found by scanning.
    let k = (1..=n).find(|&k| k as f64 / n as f64 >= q - 1e-12).unwrap_or(n);
    v[k - 1]
}

/// One random convolution shape compared bit-for-bit with the six-loop
/// oracle. About a fifth of the inputs are exact zeros, as after a ReLU.
pub fn conv_oracle_case(seed: u64) -> std::result::Result<String, String> {
    use aecnn::tensor::{conv2d_forward, ConvParams};
    let mut rng = SeededRng::new(seed);
    let c_in = 1 + rng.below(20);
    let c_out = 1 + rng.below(20);
    let k = [1, 3, 3, 3, 5][rng.below(5)];
    let pad = rng.below(k / 2 + 1);
    let stride = 1 + rng.below(3);
    let h = stride * rng.below(14) + k.max(1 + 2 * pad) - 2 * pad;
    let w = stride * rng.below(14) + k.max(1 + 2 * pad) - 2 * pad;
    let mut x = rand_tensor(&mut rng, &[c_in, h, w], -1.0, 1.0);
    for v in x.data_mut() {
        if rng.bernoulli(0.2) {
            *v = 0.0;
        }
    }
    let kernels = rand_tensor(&mut rng, &[c_out, c_in, k, k], -0.5, 0.5);
    let bias = rand_tensor(&mut rng, &[c_out], -0.1, 0.1);
    let shape = format!("c_in={c_in} c_out={c_out} {h}x{w} k={k} stride={stride} pad={pad}");
    let want = conv_naive_f32(&x, &kernels, bias.data(), stride, pad);
    let p = ConvParams {
        kernels,
        bias,
        stride,
        padding: pad,
    };
    let got = conv2d_forward(&x, &p).map_err(|e| format!("{shape}: {e}"))?;
    if got.dims() != want.dims() {
        return Err(format!("{shape}: dims {:?} vs {:?}", got.dims(), want.dims()));
    }
    match got.data().iter().zip(want.data()).position(|(a, b)| a.to_bits() != b.to_bits()) {
        Some(i) => Err(format!("{shape}: element {i} is {} but oracle gives {}", got.data()[i], want.data()[i])),
        None => Ok(shape),
    }
}

/// Random labelled scores with deliberate ties; returns the absolute gap
/// between the trapezoidal AUC and the Mann–Whitney estimate.
pub fn auc_gap(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let n = 2 + rng.below(199);
    // Few distinct levels for some instances so ties are frequent.
    let levels = if rng.bernoulli(0.5) { 1 + rng.below(6) } else { 1000 };
    let mut pairs: Vec<(f64, bool)> = (0..n)
        .map(|_| (rng.below(levels) as f64 / levels as f64, rng.bernoulli(0.4)))
        .collect();
    pairs[0].1 = true;
    pairs[1].1 = false;
    let roc = aecnn::eval::roc_from_pairs(&pairs).unwrap();
    (roc.auc - mann_whitney(&pairs)).abs()
}
