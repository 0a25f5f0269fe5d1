//! Gradient cases: each draws a random instance from `seed`, runs the
//! analytic backward under test and compares it with central differences of
//! an f64 oracle. The scalar being differentiated is `Σ w·out` with random
//! weights `w`, so every output element contributes.

use aecnn::data::SeededRng;
use aecnn::model::{build, AutoencoderModel, HeadConfig, ModelConfig, Stage};
use aecnn::optim::{bce_loss, mse_loss};
use aecnn::tensor::{
    conv2d_backward, conv2d_forward, dense, dense_backward, maxpool2d, maxpool2d_backward, relu, relu_backward,
    sigmoid, sigmoid_backward, upsample_nearest, upsample_nearest_backward, ConvParams, Tensor,
};

use super::*;

fn weighted(w: &[f32], out: &[f64]) -> f64 {
    w.iter().zip(out).map(|(&a, &b)| a as f64 * b).sum()
}

pub fn conv(seed: u64) -> GradCheck {
    let mut rng = SeededRng::new(seed);
    let c_in = 1 + rng.below(3);
    let c_out = 1 + rng.below(3);
    let k = [1, 3, 5][rng.below(3)];
    let pad = rng.below(k / 2 + 1);
    let stride = 1 + rng.below(2);
    // Spatial size chosen so (h + 2·pad − k) is a multiple of the stride.
    let steps = 1 + rng.below(4);
    let h = stride * steps + k - 2 * pad;
    let w = stride * (1 + rng.below(4)) + k - 2 * pad;
    let x = rand_tensor(&mut rng, &[c_in, h, w], -1.0, 1.0);
    let kern = rand_tensor(&mut rng, &[c_out, c_in, k, k], -1.0, 1.0);
    let bias = rand_tensor(&mut rng, &[c_out], -1.0, 1.0);
    let p = ConvParams {
        kernels: kern.clone(),
        bias: bias.clone(),
        stride,
        padding: pad,
    };
    let out = conv2d_forward(&x, &p).unwrap();
    let wts = rand_vec(&mut rng, out.len(), -1.0, 1.0);
    let g = conv2d_backward(&Tensor::new(out.dims(), wts.clone()).unwrap(), &x, &p).unwrap();

    let kd = [c_out, c_in, k, k];
    let (xi, ki, bi) = (Img::from_tensor(&x), to_f64(&kern), to_f64(&bias));
    let f = |xi: &Img, ki: &[f64], bi: &[f64]| weighted(&wts, &conv_f64(xi, ki, kd, bi, stride, pad).v);
    let gx = check_grad(&xi.v, g.input.data(), |v| {
        f(&Img { v: v.to_vec(), ..xi.clone() }, &ki, &bi)
    });
    let gk = check_grad(&ki, g.kernels.data(), |v| f(&xi, v, &bi));
    let gb = check_grad(&bi, g.bias.data(), |v| f(&xi, &ki, v));
    gx.merge(gk).merge(gb)
}

pub fn pool(seed: u64) -> GradCheck {
    let mut rng = SeededRng::new(seed);
    let c = 1 + rng.below(3);
    let (h, w) = (2 * (1 + rng.below(4)), 2 * (1 + rng.below(4)));
    let x = rand_tensor(&mut rng, &[c, h, w], -1.0, 1.0);
    let (out, cache) = maxpool2d(&x).unwrap();
    let wts = rand_vec(&mut rng, out.len(), -1.0, 1.0);
    let gx = maxpool2d_backward(&Tensor::new(out.dims(), wts.clone()).unwrap(), &cache).unwrap();
    let xi = Img::from_tensor(&x);
    check_grad(&xi.v, gx.data(), |v| {
        weighted(&wts, &maxpool_f64(&Img { v: v.to_vec(), ..xi.clone() }).v)
    })
}

pub fn upsample(seed: u64) -> GradCheck {
    let mut rng = SeededRng::new(seed);
    let c = 1 + rng.below(3);
    let (h, w) = (1 + rng.below(4), 1 + rng.below(4));
    let f = 2 + rng.below(2);
    let x = rand_tensor(&mut rng, &[c, h, w], -1.0, 1.0);
    let out = upsample_nearest(&x, f).unwrap();
    let wts = rand_vec(&mut rng, out.len(), -1.0, 1.0);
    let gx = upsample_nearest_backward(&Tensor::new(out.dims(), wts.clone()).unwrap(), f).unwrap();
    let xi = Img::from_tensor(&x);
    check_grad(&xi.v, gx.data(), |v| {
        weighted(&wts, &upsample_f64(&Img { v: v.to_vec(), ..xi.clone() }, f).v)
    })
}

pub fn dense_layer(seed: u64) -> GradCheck {
    let mut rng = SeededRng::new(seed);
    let (n, m) = (1 + rng.below(8), 1 + rng.below(8));
    let x = rand_tensor(&mut rng, &[n], -1.0, 1.0);
    let wt = rand_tensor(&mut rng, &[m, n], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[m], -1.0, 1.0);
    let out = dense(&x, &wt, &b).unwrap();
    let wts = rand_vec(&mut rng, out.len(), -1.0, 1.0);
    let g = dense_backward(&Tensor::new(&[m], wts.clone()).unwrap(), &x, &wt, &b).unwrap();
    let (xv, wv, bv) = (to_f64(&x), to_f64(&wt), to_f64(&b));
    let gx = check_grad(&xv, g.input.data(), |v| weighted(&wts, &dense_f64(v, &wv, &bv)));
    let gw = check_grad(&wv, g.weights.data(), |v| weighted(&wts, &dense_f64(&xv, v, &bv)));
    let gb = check_grad(&bv, g.bias.data(), |v| weighted(&wts, &dense_f64(&xv, &wv, v)));
    gx.merge(gw).merge(gb)
}

pub fn relu_act(seed: u64) -> GradCheck {
    let mut rng = SeededRng::new(seed);
    let n = 2 + rng.below(30);
    let x = rand_tensor(&mut rng, &[n], -1.0, 1.0);
    let out = relu(&x);
    let wts = rand_vec(&mut rng, out.len(), -1.0, 1.0);
    let gx = relu_backward(&Tensor::new(x.dims(), wts.clone()).unwrap(), &x).unwrap();
    let xv = to_f64(&x);
    check_grad(&xv, gx.data(), |v| {
        weighted(&wts, &v.iter().map(|&a| relu_f64(a)).collect::<Vec<_>>())
    })
}

pub fn sigmoid_act(seed: u64) -> GradCheck {
    let mut rng = SeededRng::new(seed);
    let n = 2 + rng.below(30);
    let x = rand_tensor(&mut rng, &[n], -6.0, 6.0);
    let out = sigmoid(&x);
    let wts = rand_vec(&mut rng, out.len(), -1.0, 1.0);
    let gx = sigmoid_backward(&Tensor::new(x.dims(), wts.clone()).unwrap(), &out).unwrap();
    let xv = to_f64(&x);
    check_grad(&xv, gx.data(), |v| {
        weighted(&wts, &v.iter().map(|&a| sigmoid_f64(a)).collect::<Vec<_>>())
    })
}

pub fn mse(seed: u64) -> GradCheck {
    let mut rng = SeededRng::new(seed);
    let n = 1 + rng.below(40);
    let p = rand_tensor(&mut rng, &[n], 0.0, 1.0);
    let t = rand_tensor(&mut rng, &[n], 0.0, 1.0);
    let g = mse_loss(&p, &t).unwrap().grad;
    let tv = to_f64(&t);
    check_grad(&to_f64(&p), g.data(), |v| mse_f64(v, &tv))
}

pub fn bce(seed: u64) -> GradCheck {
    let mut rng = SeededRng::new(seed);
    let n = 1 + rng.below(40);
    let p = rand_tensor(&mut rng, &[n], 0.02, 0.98);
    let y = Tensor::from_fn(&[n], |_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 });
    let g = bce_loss(&p, &y).unwrap().grad;
    let yv = to_f64(&y);
    check_grad(&to_f64(&p), g.data(), |v| bce_f64(v, &yv))
}

/// 8×8 autoencoder with one pool/upsample level and a classifier head.
pub fn toy_config(seed: u64) -> ModelConfig {
    ModelConfig {
        input_size: 8,
        encoder: vec![Stage::Conv(3), Stage::Pool],
        latent_channels: 2,
        decoder: vec![Stage::Upsample, Stage::Conv(3)],
        classifier_head: Some(HeadConfig { hidden: 4 }),
        seed,
    }
}

/// Biases are zero after init; randomize them so their gradients and the
/// ReLU masks are exercised away from the origin.
fn perturbed_model(cfg: &ModelConfig, rng: &mut SeededRng) -> AutoencoderModel {
    let mut model = build(cfg).unwrap();
    for t in model.params_mut() {
        for v in t.data_mut() {
            *v += rng.uniform_range(-0.1, 0.1) as f32;
        }
    }
    model
}

/// End-to-end gradient of `(1−λ)·MSE(recon, x) + λ·BCE(head(latent), y)`
/// with respect to every parameter. λ = 0 checks the plain autoencoder.
pub fn autoencoder(seed: u64, lambda: f32) -> GradCheck {
    let mut rng = SeededRng::new(seed);
    let cfg = toy_config(seed);
    let model = perturbed_model(&cfg, &mut rng);
    let x = rand_tensor(&mut rng, &[1, 8, 8], 0.0, 1.0);
    let y = if rng.bernoulli(0.5) { 1.0f32 } else { 0.0 };

    let trace = model.forward_sample(&x).unwrap();
    let mut grads = model.zero_grads();
    let mut g_recon = mse_loss(&trace.reconstruction, &x).unwrap().grad;
    g_recon.scale(1.0 - lambda);
    let g_latent = if lambda > 0.0 {
        let head = model.forward_head(trace.latent()).unwrap();
        let mut gp = bce_loss(&Tensor::new(&[1], vec![head.prob]).unwrap(), &Tensor::new(&[1], vec![y]).unwrap())
            .unwrap()
            .grad;
        gp.scale(lambda);
        Some(model.backward_head(&head, gp.data()[0], &mut grads).unwrap())
    } else {
        None
    };
    model.backward_sample(&trace, &g_recon, g_latent.as_ref(), &mut grads).unwrap();

    let base = model_params_f64(&model);
    let xi = Img::from_tensor(&x);
    let head_start = model.head_param_range().start;
    let loss = |params: &[(Vec<usize>, Vec<f64>)]| {
        let (recon, latent) = ae_forward_f64(&cfg, &params[..head_start], &xi);
        let mut l = (1.0 - lambda as f64) * mse_f64(&recon.v, &xi.v);
        if lambda > 0.0 {
            let p = head_f64(&params[head_start..], &latent);
            l += lambda as f64 * bce_f64(&[p], &[y as f64]);
        }
        l
    };

    // The f64 oracle must agree with the f32 forward before its derivatives
    // mean anything.
    let (recon, _) = ae_forward_f64(&cfg, &base[..head_start], &xi);
    for (a, b) in recon.v.iter().zip(trace.reconstruction.data()) {
        assert!((a - *b as f64).abs() < 1e-5, "oracle forward disagrees: {a} vs {b}");
    }

    let mut total = GradCheck::default();
    let n_params = if lambda > 0.0 { base.len() } else { head_start };
    for k in 0..n_params {
        let mut params = base.clone();
        let r = check_grad(&base[k].1, grads[k].data(), |v| {
            params[k].1.copy_from_slice(v);
            loss(&params)
        });
        total = total.merge(r);
    }
    total
}

pub const KERNELS: [(&str, fn(u64) -> GradCheck); 8] = [
    ("conv", conv),
    ("pool", pool),
    ("upsample", upsample),
    ("dense", dense_layer),
    ("relu", relu_act),
    ("sigmoid", sigmoid_act),
    ("mse", mse),
    ("bce", bce),
];
