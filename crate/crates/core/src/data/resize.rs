use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sampling position and blend weight along one axis, half-pixel centres.
fn taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Bilinear resize of a `[C, H, W]` tensor with the half-pixel-centre
/// convention: destination index `d` samples source coordinate
/// `(d + 0.5)·in/out − 0.5`, clamped to the image.
pub fn resize_bilinear(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    img.expect_rank("resize_bilinear", 3)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Validation(format!(
            "resize target {out_h}x{out_w} must be positive"
        )));
    }
    let (c, h, w) = (img.dims()[0], img.dims()[1], img.dims()[2]);
    let ty = taps(h, out_h);
    let tx = taps(w, out_w);
    let src = img.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ty {
            for &(x0, x1, fx) in &tx {
                let a = plane[y0 * w + x0] as f64;
                let b = plane[y0 * w + x1] as f64;
                let cc = plane[y1 * w + x0] as f64;
                let d = plane[y1 * w + x1] as f64;
                let top = a + (b - a) * fx;
                let bottom = cc + (d - cc) * fx;
                out.push((top + (bottom - top) * fy) as f32);
            }
        }
    }
    Tensor::new(&[c, out_h, out_w], out)
}
