//! Register-blocked loops behind the unit-stride convolution.
//!
//! Two primitives: a multi-channel correlation and a batch of dot products.
//! On x86_64 they run with AVX when the CPU has it and SSE otherwise; other
//! targets use the portable code. Every path performs the same IEEE
//! operations per output element in the same order, so results do not depend
//! on the path taken.

/// Eight-lane dot product: lane `l` sums positions `x ≡ l (mod 8)` of the
/// full 8-chunks, lanes are reduced pairwise, then the tail (summed in order
/// from zero) is added.
pub(super) fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for l in 0..8 {
            lanes[l] += xa[l] * xb[l];
        }
    }
    finish_dot(&lanes, ra, rb)
}

fn finish_dot(lanes: &[f32; 8], ra: &[f32], rb: &[f32]) -> f32 {
    let mut tail = 0.0f32;
    for (xa, xb) in ra.iter().zip(rb) {
        tail += xa * xb;
    }
    let s = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    s + tail
}

/// `out[o·out_len + q] = Σ_c Σ_t input[c·in_stride + q + offs[t]] · w[(o·n_in + c)·taps + t]`,
/// each sum accumulated from zero in `(c, t)` order.
pub(super) fn correlate(
    input: &[f32],
    in_stride: usize,
    n_in: usize,
    offs: &[usize],
    w: &[f32],
    n_out: usize,
    out_len: usize,
) -> Vec<f32> {
    let taps = offs.len();
    assert!(taps > 0 && w.len() == n_out * n_in * taps);
    let mut out = vec![0.0f32; n_out * out_len];
    let mut o = 0;
    while o < n_out {
        let b = if n_out - o >= 4 { 4 } else { 1 };
        // Weights of this block regrouped as [c][t][b].
        let mut wb = vec![0.0f32; n_in * taps * b];
        for c in 0..n_in {
            for t in 0..taps {
                for k in 0..b {
                    wb[(c * taps + t) * b + k] = w[((o + k) * n_in + c) * taps + t];
                }
            }
        }
        let args = Block {
            input,
            in_stride,
            n_in,
            offs,
            wb: &wb,
            o0: o,
            out_len,
        };
        let done = if b == 4 { args.run::<4>(&mut out) } else { args.run::<1>(&mut out) };
        args.tail(b, done, &mut out);
        o += b;
    }
    out
}

struct Block<'a> {
    input: &'a [f32],
    in_stride: usize,
    n_in: usize,
    offs: &'a [usize],
    wb: &'a [f32],
    o0: usize,
    out_len: usize,
}

impl Block<'_> {
    /// Fills whole tiles from position 0 and returns where it stopped.
    fn run<const B: usize>(&self, out: &mut [f32]) -> usize {
        #[cfg(target_arch = "x86_64")]
        {
            // SAFETY: the AVX path is only taken when the CPU reports AVX; SSE
            // is part of the x86_64 baseline.
            unsafe {
                if std::arch::is_x86_feature_detected!("avx") {
                    if B == 4 {
                        avx::correlate_block::<B, 2>(self, out)
                    } else {
                        avx::correlate_block::<B, 4>(self, out)
                    }
                } else if B == 4 {
                    sse::correlate_block::<B, 1>(self, out)
                } else {
                    sse::correlate_block::<B, 4>(self, out)
                }
            }
        }
        #[cfg(not(target_arch = "x86_64"))]
        {
            let _ = out;
            0
        }
    }

    fn tail(&self, b: usize, from: usize, out: &mut [f32]) {
        let taps = self.offs.len();
        for x in from..self.out_len {
            for k in 0..b {
                let mut acc = 0.0f32;
                for c in 0..self.n_in {
                    let plane = &self.input[c * self.in_stride + x..];
                    for (t, &off) in self.offs.iter().enumerate() {
                        acc += plane[off] * self.wb[(c * taps + t) * b + k];
                    }
                }
                out[(self.o0 + k) * self.out_len + x] = acc;
            }
        }
    }
}

/// Dot product of every `a` row with every `b` row, each with [`dot`]
/// semantics. Returns a row-major `a.len() × b.len()` matrix.
pub(super) fn dot_matrix(a: &[&[f32]], b: &[&[f32]]) -> Vec<f32> {
    let n = a.first().map_or(0, |r| r.len());
    assert!(a.iter().chain(b).all(|r| r.len() == n));
    let nb = b.len();
    let mut out = vec![0.0f32; a.len() * nb];
    #[cfg(target_arch = "x86_64")]
    let bb = if std::arch::is_x86_feature_detected!("avx") { 4 } else { 2 };
    #[cfg(not(target_arch = "x86_64"))]
    let bb = 0;
    let mut i = 0;
    while i < a.len() {
        let ba = if a.len() - i >= 2 { 2 } else { 1 };
        let mut j = 0;
        while j < nb {
            if bb > 0 && j + bb <= nb {
                dot_tile(&a[i..i + ba], &b[j..j + bb], &mut out, i, j, nb);
                j += bb;
            } else {
                for k in 0..ba {
                    out[(i + k) * nb + j] = dot(a[i + k], b[j]);
                }
                j += 1;
            }
        }
        i += ba;
    }
    out
}

#[cfg(target_arch = "x86_64")]
fn dot_tile(a: &[&[f32]], b: &[&[f32]], out: &mut [f32], i: usize, j: usize, nb: usize) {
    macro_rules! run {
        ($m:ident, $ba:literal, $bb:literal) => {
            $m::dot_block::<$ba, $bb>(a.try_into().unwrap(), b.try_into().unwrap())
                .iter()
                .flatten()
                .copied()
                .collect()
        };
    }
    // SAFETY: see `Block::run`.
    let r: Vec<f32> = unsafe {
        match (std::arch::is_x86_feature_detected!("avx"), a.len()) {
            (true, 2) => run!(avx, 2, 4),
            (true, _) => run!(avx, 1, 4),
            (false, 2) => run!(sse, 2, 2),
            (false, _) => run!(sse, 1, 2),
        }
    };
    for (k, row) in r.chunks_exact(b.len()).enumerate() {
        out[(i + k) * nb + j..(i + k) * nb + j + b.len()].copy_from_slice(row);
    }
}

#[cfg(not(target_arch = "x86_64"))]
fn dot_tile(_: &[&[f32]], _: &[&[f32]], _: &mut [f32], _: usize, _: usize, _: usize) {
    unreachable!("no blocked dot products on this target")
}

/// Eight-lane vector operations. `mul_acc` rounds the product and the sum
/// separately, like the scalar code.
#[cfg(target_arch = "x86_64")]
mod sse_ops {
    use std::arch::x86_64::*;

    #[derive(Clone, Copy)]
    pub struct V(__m128, __m128);

    #[inline(always)]
    pub unsafe fn zero() -> V {
        V(_mm_setzero_ps(), _mm_setzero_ps())
    }

    #[inline(always)]
    pub unsafe fn splat(x: f32) -> V {
        let s = _mm_set1_ps(x);
        V(s, s)
    }

    #[inline(always)]
    pub unsafe fn load(s: &[f32]) -> V {
        let s = &s[..8];
        V(_mm_loadu_ps(s.as_ptr()), _mm_loadu_ps(s[4..].as_ptr()))
    }

    #[inline(always)]
    pub unsafe fn store(d: &mut [f32], v: V) {
        let d = &mut d[..8];
        _mm_storeu_ps(d.as_mut_ptr(), v.0);
        _mm_storeu_ps(d[4..].as_mut_ptr(), v.1);
    }

    #[inline(always)]
    pub unsafe fn mul_acc(acc: V, a: V, b: V) -> V {
        V(
            _mm_add_ps(acc.0, _mm_mul_ps(a.0, b.0)),
            _mm_add_ps(acc.1, _mm_mul_ps(a.1, b.1)),
        )
    }
}

#[cfg(target_arch = "x86_64")]
mod avx_ops {
    use std::arch::x86_64::*;

    #[derive(Clone, Copy)]
    pub struct V(__m256);

    #[inline]
    #[target_feature(enable = "avx")]
    pub unsafe fn zero() -> V {
        V(_mm256_setzero_ps())
    }

    #[inline]
    #[target_feature(enable = "avx")]
    pub unsafe fn splat(x: f32) -> V {
        V(_mm256_set1_ps(x))
    }

    #[inline]
    #[target_feature(enable = "avx")]
    pub unsafe fn load(s: &[f32]) -> V {
        V(_mm256_loadu_ps(s[..8].as_ptr()))
    }

    #[inline]
    #[target_feature(enable = "avx")]
    pub unsafe fn store(d: &mut [f32], v: V) {
        _mm256_storeu_ps(d[..8].as_mut_ptr(), v.0)
    }

    #[inline]
    #[target_feature(enable = "avx")]
    pub unsafe fn mul_acc(acc: V, a: V, b: V) -> V {
        V(_mm256_add_ps(acc.0, _mm256_mul_ps(a.0, b.0)))
    }
}

/// Expands the blocked loops for one vector backend. `B` output channels by
/// `V` eight-lane vectors are held in registers across the whole `(c, t)`
/// reduction.
#[cfg(target_arch = "x86_64")]
macro_rules! blocked_kernels {
    ($name:ident, $ops:ident $(, $feature:literal)?) => {
        mod $name {
            use super::$ops as o;
            use super::Block;

            $(#[target_feature(enable = $feature)])?
            pub(super) unsafe fn correlate_block<const B: usize, const V: usize>(k: &Block<'_>, out: &mut [f32]) -> usize {
                let tile = 8 * V;
                let taps = k.offs.len();
                let span = k.offs[taps - 1] + tile;
                let mut x0 = 0;
                while x0 + tile <= k.out_len {
                    let mut acc = [[o::zero(); V]; B];
                    for c in 0..k.n_in {
                        let base = c * k.in_stride + x0;
                        let win = &k.input[base..base + span];
                        let wc = &k.wb[c * taps * B..(c + 1) * taps * B];
                        for t in 0..taps {
                            let src = &win[k.offs[t]..k.offs[t] + tile];
                            let mut s = [o::zero(); V];
                            for v in 0..V {
                                s[v] = o::load(&src[8 * v..]);
                            }
                            for b in 0..B {
                                let wv = o::splat(wc[t * B + b]);
                                for v in 0..V {
                                    acc[b][v] = o::mul_acc(acc[b][v], s[v], wv);
                                }
                            }
                        }
                    }
                    for b in 0..B {
                        let start = (k.o0 + b) * k.out_len + x0;
                        let dst = &mut out[start..start + tile];
                        for v in 0..V {
                            o::store(&mut dst[8 * v..], acc[b][v]);
                        }
                    }
                    x0 += tile;
                }
                x0
            }

            $(#[target_feature(enable = $feature)])?
            pub(super) unsafe fn dot_block<const BA: usize, const BB: usize>(
                a: [&[f32]; BA],
                b: [&[f32]; BB],
            ) -> [[f32; BB]; BA] {
                let n = a[0].len();
                let mut acc = [[o::zero(); BB]; BA];
                let mut x = 0;
                while x + 8 <= n {
                    let mut bv = [o::zero(); BB];
                    for j in 0..BB {
                        bv[j] = o::load(&b[j][x..]);
                    }
                    for i in 0..BA {
                        let av = o::load(&a[i][x..]);
                        for j in 0..BB {
                            acc[i][j] = o::mul_acc(acc[i][j], av, bv[j]);
                        }
                    }
                    x += 8;
                }
                let mut out = [[0.0f32; BB]; BA];
                for i in 0..BA {
                    for j in 0..BB {
                        let mut lanes = [0.0f32; 8];
                        o::store(&mut lanes, acc[i][j]);
                        out[i][j] = super::finish_dot(&lanes, &a[i][x..], &b[j][x..]);
                    }
                }
                out
            }
        }
    };
}

#[cfg(target_arch = "x86_64")]
blocked_kernels!(sse, sse_ops);
#[cfg(target_arch = "x86_64")]
blocked_kernels!(avx, avx_ops, "avx");
