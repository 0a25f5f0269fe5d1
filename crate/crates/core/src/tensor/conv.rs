use super::blocked::{correlate, dot, dot_matrix};
use super::Tensor;
use crate::error::{Error, Result};

/// Kernels `[c_out, c_in, kh, kw]`, bias `[c_out]`, symmetric zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub kernels: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

struct Geometry {
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

fn geometry(input: &Tensor, p: &ConvParams) -> Result<Geometry> {
    input.expect_rank("conv2d", 3)?;
    p.kernels.expect_rank("conv2d", 4)?;
    let (c_in, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    let kd = p.kernels.dims();
    let (c_out, kc, kh, kw) = (kd[0], kd[1], kd[2], kd[3]);
    if kc != c_in {
        return Err(Error::dim("conv2d", &[c_out, c_in, kh, kw], kd));
    }
    p.bias.expect_dims("conv2d", &[c_out])?;
    if p.stride == 0 {
        return Err(Error::Validation("conv2d: stride must be positive".into()));
    }
    let (ph, pw) = (h + 2 * p.padding, w + 2 * p.padding);
    if kh > ph || kw > pw || (ph - kh) % p.stride != 0 || (pw - kw) % p.stride != 0 {
        return Err(Error::dim("conv2d", &[c_in, h, w], kd));
    }
    Ok(Geometry {
        c_in,
        c_out,
        h,
        w,
        kh,
        kw,
        oh: (ph - kh) / p.stride + 1,
        ow: (pw - kw) / p.stride + 1,
        stride: p.stride,
        pad: p.padding,
    })
}

/// Output indices `o` in `0..n_out` with `0 <= o*stride + offset < n_in`.
fn valid_range(n_out: usize, n_in: usize, offset: isize, stride: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { (-offset + s - 1) / s };
    let hi = if (n_in as isize) <= offset {
        0
    } else {
        ((n_in as isize - offset + s - 1) / s).min(n_out as isize)
    };
    let lo = lo.min(n_out as isize) as usize;
    (lo, (hi.max(lo as isize)) as usize)
}

/// Cross-correlation with zero padding.
///
/// Each output element accumulates `input * kernel` over channels, then
/// kernel rows, then kernel columns, starting from zero; the bias is added
/// last.
pub fn conv2d_forward(input: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let g = geometry(input, p)?;
    if g.stride == 1 {
        return Ok(forward_unit_stride(input, p, &g));
    }
    let mut out = Tensor::zeros(&[g.c_out, g.oh, g.ow]);
    let x = input.data();
    let k = p.kernels.data();
    let plane = g.oh * g.ow;
    for (o, out_plane) in out.data_mut().chunks_exact_mut(plane).enumerate() {
        for c in 0..g.c_in {
            let in_plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
            for i in 0..g.kh {
                let off_y = i as isize - g.pad as isize;
                let (y_lo, y_hi) = valid_range(g.oh, g.h, off_y, g.stride);
                for j in 0..g.kw {
                    let wv = k[((o * g.c_in + c) * g.kh + i) * g.kw + j];
                    let off_x = j as isize - g.pad as isize;
                    let (x_lo, x_hi) = valid_range(g.ow, g.w, off_x, g.stride);
                    if x_lo >= x_hi {
                        continue;
                    }
                    for y in y_lo..y_hi {
                        let iy = (y * g.stride) as isize + off_y;
                        let in_row = &in_plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                        let out_row = &mut out_plane[y * g.ow..(y + 1) * g.ow];
                        if g.stride == 1 {
                            let start = (x_lo as isize + off_x) as usize;
                            let src = &in_row[start..start + (x_hi - x_lo)];
                            for (dst, &s) in out_row[x_lo..x_hi].iter_mut().zip(src) {
                                *dst += s * wv;
                            }
                        } else {
                            for (xo, dst) in out_row.iter_mut().enumerate().take(x_hi).skip(x_lo) {
                                let ix = (xo * g.stride) as isize + off_x;
                                *dst += in_row[ix as usize] * wv;
                            }
                        }
                    }
                }
            }
        }
        let b = p.bias.data()[o];
        for v in out_plane.iter_mut() {
            *v += b;
        }
    }
    Ok(out)
}

/// Copies `[C, H, W]` into a zero-bordered `[C, H+2p, W+2p]` buffer.
fn pad_planes(x: &[f32], g: &Geometry) -> Vec<f32> {
    let (ph, pw) = (g.h + 2 * g.pad, g.w + 2 * g.pad);
    let mut out = vec![0.0f32; g.c_in * ph * pw];
    for c in 0..g.c_in {
        for y in 0..g.h {
            let src = &x[(c * g.h + y) * g.w..(c * g.h + y + 1) * g.w];
            let dst = (c * ph + y + g.pad) * pw + g.pad;
            out[dst..dst + g.w].copy_from_slice(src);
        }
    }
    out
}

// Unit-stride kernels work on "wide" output planes whose rows are as long
// as the padded input rows, so every kernel tap becomes one contiguous
// update. The extra columns are scratch and are dropped (forward) or held at
// zero (backward). Zero padding adds exact zeros and leaves sums unchanged.

fn wide_len(g: &Geometry) -> usize {
    let pw = g.w + 2 * g.pad;
    (g.oh - 1) * pw + g.ow
}

fn tap_offsets(g: &Geometry, pw: usize) -> Vec<usize> {
    (0..g.kh).flat_map(|i| (0..g.kw).map(move |j| i * pw + j)).collect()
}

fn forward_unit_stride(input: &Tensor, p: &ConvParams, g: &Geometry) -> Tensor {
    let (ph, pw) = (g.h + 2 * g.pad, g.w + 2 * g.pad);
    let padded = pad_planes(input.data(), g);
    let len = wide_len(g);
    let wide = correlate(&padded, ph * pw, g.c_in, &tap_offsets(g, pw), p.kernels.data(), g.c_out, len);
    let mut out = Tensor::zeros(&[g.c_out, g.oh, g.ow]);
    let plane = g.oh * g.ow;
    for (o, out_plane) in out.data_mut().chunks_exact_mut(plane).enumerate() {
        let b = p.bias.data()[o];
        let src = &wide[o * len..(o + 1) * len];
        for (y, row) in out_plane.chunks_exact_mut(g.ow).enumerate() {
            for (d, &v) in row.iter_mut().zip(&src[y * pw..y * pw + g.ow]) {
                *d = v + b;
            }
        }
    }
    out
}

fn backward_unit_stride(
    grad_out: &Tensor,
    input: &Tensor,
    p: &ConvParams,
    g: &Geometry,
    want_input: bool,
) -> (Tensor, Option<Tensor>) {
    let (ph, pw) = (g.h + 2 * g.pad, g.w + 2 * g.pad);
    let padded = pad_planes(input.data(), g);
    let len = wide_len(g);
    let taps = g.kh * g.kw;
    let offs = tap_offsets(g, pw);
    let max_off = offs[taps - 1];
    // Gradient planes in the wide layout, shifted right by `max_off` with
    // zeros on both sides so the input gradient is a plain correlation.
    let ext_len = ph * pw + max_off;
    let mut ext = vec![0.0f32; g.c_out * ext_len];
    for (o, g_plane) in grad_out.data().chunks_exact(g.oh * g.ow).enumerate() {
        for (y, row) in g_plane.chunks_exact(g.ow).enumerate() {
            let dst = o * ext_len + max_off + y * pw;
            ext[dst..dst + g.ow].copy_from_slice(row);
        }
    }
    let wide = |o: usize| &ext[o * ext_len + max_off..o * ext_len + max_off + len];

    let rows: Vec<&[f32]> = (0..g.c_out).map(wide).collect();
    let cols: Vec<&[f32]> = (0..g.c_in)
        .flat_map(|c| offs.iter().map(move |&off| (c, off)))
        .map(|(c, off)| &padded[c * ph * pw + off..c * ph * pw + off + len])
        .collect();
    // Row-major [c_out][c_in·taps] is exactly the kernel layout.
    let grad_k = Tensor::new(p.kernels.dims(), dot_matrix(&rows, &cols)).expect("kernel gradient shape");

    let grad_in = want_input.then(|| {
        // Transposed, spatially flipped kernels: w'[c][o][t'] = w[o][c][taps-1-t'].
        let k = p.kernels.data();
        let mut wt = vec![0.0f32; k.len()];
        for o in 0..g.c_out {
            for c in 0..g.c_in {
                for t in 0..taps {
                    wt[(c * g.c_out + o) * taps + (taps - 1 - t)] = k[(o * g.c_in + c) * taps + t];
                }
            }
        }
        let grad_pad = correlate(&ext, ext_len, g.c_out, &offs, &wt, g.c_in, ph * pw);
        let mut gi = Tensor::zeros(input.dims());
        for c in 0..g.c_in {
            for y in 0..g.h {
                let src = (c * ph + y + g.pad) * pw + g.pad;
                let dst = (c * g.h + y) * g.w;
                gi.data_mut()[dst..dst + g.w].copy_from_slice(&grad_pad[src..src + g.w]);
            }
        }
        gi
    });
    (grad_k, grad_in)
}

/// Exact gradients of the convolution with respect to its input, kernels and
/// bias.
pub fn conv2d_backward(grad_out: &Tensor, input: &Tensor, p: &ConvParams) -> Result<ConvGrads> {
    let (kernels, bias, grad_input) = backward_impl(grad_out, input, p, true)?;
    Ok(ConvGrads {
        input: grad_input.expect("input gradient requested"),
        kernels,
        bias,
    })
}

/// Kernel and bias gradients only; used for the first layer, whose input
/// gradient is never consumed.
pub(crate) fn conv2d_backward_params(
    grad_out: &Tensor,
    input: &Tensor,
    p: &ConvParams,
) -> Result<(Tensor, Tensor)> {
    let (kernels, bias, _) = backward_impl(grad_out, input, p, false)?;
    Ok((kernels, bias))
}

fn backward_impl(
    grad_out: &Tensor,
    input: &Tensor,
    p: &ConvParams,
    want_input: bool,
) -> Result<(Tensor, Tensor, Option<Tensor>)> {
    let g = geometry(input, p)?;
    grad_out.expect_dims("conv2d_backward", &[g.c_out, g.oh, g.ow])?;
    let go = grad_out.data();
    let x = input.data();
    let k = p.kernels.data();
    let plane = g.oh * g.ow;

    let mut grad_bias = Tensor::zeros(&[g.c_out]);
    for (o, gb) in grad_bias.data_mut().iter_mut().enumerate() {
        *gb = go[o * plane..(o + 1) * plane].iter().sum();
    }

    if g.stride == 1 {
        let (grad_k, grad_in) = backward_unit_stride(grad_out, input, p, &g, want_input);
        return Ok((grad_k, grad_bias, grad_in));
    }

    let mut grad_k = Tensor::zeros(p.kernels.dims());
    let mut grad_in = want_input.then(|| Tensor::zeros(input.dims()));
    let gk = grad_k.data_mut();
    for o in 0..g.c_out {
        let g_plane = &go[o * plane..(o + 1) * plane];
        for c in 0..g.c_in {
            let in_plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
            for i in 0..g.kh {
                let off_y = i as isize - g.pad as isize;
                let (y_lo, y_hi) = valid_range(g.oh, g.h, off_y, g.stride);
                for j in 0..g.kw {
                    let kidx = ((o * g.c_in + c) * g.kh + i) * g.kw + j;
                    let wv = k[kidx];
                    let off_x = j as isize - g.pad as isize;
                    let (x_lo, x_hi) = valid_range(g.ow, g.w, off_x, g.stride);
                    if x_lo >= x_hi {
                        continue;
                    }
                    let mut acc = 0.0f32;
                    for y in y_lo..y_hi {
                        let iy = ((y * g.stride) as isize + off_y) as usize;
                        let g_row = &g_plane[y * g.ow + x_lo..y * g.ow + x_hi];
                        if g.stride == 1 {
                            let start = (x_lo as isize + off_x) as usize;
                            let n = x_hi - x_lo;
                            let in_row = &in_plane[iy * g.w + start..iy * g.w + start + n];
                            acc += dot(g_row, in_row);
                            if let Some(gi) = grad_in.as_mut() {
                                let base = c * g.h * g.w + iy * g.w + start;
                                let dst = &mut gi.data_mut()[base..base + n];
                                for (d, &gv) in dst.iter_mut().zip(g_row) {
                                    *d += gv * wv;
                                }
                            }
                        } else {
                            for (t, &gv) in g_row.iter().enumerate() {
                                let ix = (((x_lo + t) * g.stride) as isize + off_x) as usize;
                                acc += gv * in_plane[iy * g.w + ix];
                                if let Some(gi) = grad_in.as_mut() {
                                    gi.data_mut()[c * g.h * g.w + iy * g.w + ix] += gv * wv;
                                }
                            }
                        }
                    }
                    gk[kidx] = acc;
                }
            }
        }
    }
    Ok((grad_k, grad_bias, grad_in))
}
