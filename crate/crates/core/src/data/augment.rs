use serde::{Deserialize, Serialize};

use super::{resize_bilinear, ImageRecord, SeededRng};
use crate::tensor::Tensor;

/// Training-time augmentation: horizontal flip, brightness shift, random crop
/// resized back to the original extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentPolicy {
    pub hflip_prob: f64,
    /// Shift drawn uniformly from `[-brightness, +brightness]`.
    pub brightness: f64,
    /// Fraction of the image area kept by the crop.
    pub crop_area: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            hflip_prob: 0.5,
            brightness: 0.1,
            crop_area: 0.9,
        }
    }
}

pub fn hflip(img: &Tensor) -> Tensor {
    let w = img.dims()[img.rank() - 1];
    let mut out = img.clone();
    for row in out.data_mut().chunks_exact_mut(w) {
        row.reverse();
    }
    out
}

pub fn adjust_brightness(img: &Tensor, shift: f32) -> Tensor {
    img.map(|v| (v + shift).clamp(0.0, 1.0))
}

fn crop(img: &Tensor, y0: usize, x0: usize, ch: usize, cw: usize) -> Tensor {
    let (c, h, w) = (img.dims()[0], img.dims()[1], img.dims()[2]);
    let mut out = Vec::with_capacity(c * ch * cw);
    for plane in img.data().chunks_exact(h * w) {
        for y in y0..y0 + ch {
            out.extend_from_slice(&plane[y * w + x0..y * w + x0 + cw]);
        }
    }
    Tensor::new(&[c, ch, cw], out).expect("crop extent is positive")
}

/// Applies the policy to a `[C, H, W]` image. Exactly four draws are taken,
/// always in the order flip, brightness, crop row, crop column.
pub fn augment_tensor(img: &Tensor, rng: &mut SeededRng, policy: &AugmentPolicy) -> Tensor {
    let flip = rng.bernoulli(policy.hflip_prob);
    let shift = rng.uniform_range(-policy.brightness, policy.brightness) as f32;
    let (h, w) = (img.dims()[1], img.dims()[2]);
    let side = policy.crop_area.clamp(0.0, 1.0).sqrt();
    let ch = ((h as f64 * side).round() as usize).clamp(1, h);
    let cw = ((w as f64 * side).round() as usize).clamp(1, w);
    let y0 = rng.below(h - ch + 1);
    let x0 = rng.below(w - cw + 1);

    let mut out = if flip { hflip(img) } else { img.clone() };
    if shift != 0.0 {
        out = adjust_brightness(&out, shift);
    }
    if ch != h || cw != w {
        let cropped = crop(&out, y0, x0, ch, cw);
        out = resize_bilinear(&cropped, h, w)
            .expect("resize to a positive extent")
            .map(|v| v.clamp(0.0, 1.0));
    }
    out
}

pub fn augment(record: &ImageRecord, rng: &mut SeededRng, policy: &AugmentPolicy) -> ImageRecord {
    ImageRecord {
        id: record.id.clone(),
        pixels: augment_tensor(&record.pixels, rng, policy),
        label: record.label,
    }
}
