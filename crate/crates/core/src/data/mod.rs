//! Image ingestion, preprocessing and corpus management.

mod augment;
mod manifest;
mod pgm;
mod resize;
mod rng;
mod synth;

pub use augment::{adjust_brightness, augment, augment_tensor, hflip, AugmentPolicy};
pub use manifest::{split_manifest, DatasetManifest, Label, ManifestEntry, Splits};
pub use pgm::{encode_pgm, load_pgm, read_pgm, save_pgm};
pub use resize::resize_bilinear;
pub use rng::SeededRng;
pub use synth::{gen_synth, render_anomalous, render_normal, render_pair, synth_image};

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One grayscale image `[1, H, W]` with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub pixels: Tensor,
    pub label: Label,
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, pixels: Tensor, label: Label) -> Result<Self> {
        pixels.expect_rank("ImageRecord", 3)?;
        let d = pixels.dims();
        if d[0] != 1 || d[1] < 8 || d[2] < 8 {
            return Err(Error::Validation(format!(
                "image must be single-channel and at least 8x8, got {d:?}"
            )));
        }
        if pixels.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Validation("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self {
            id: id.into(),
            pixels,
            label,
        })
    }
}

/// Loads one image, resizing to `size × size` when given.
pub fn load_image(path: &Path, size: Option<usize>) -> Result<Tensor> {
    let img = read_pgm(path)?;
    match size {
        Some(s) if img.dims()[1] != s || img.dims()[2] != s => {
            Ok(resize_bilinear(&img, s, s)?.map(|v| v.clamp(0.0, 1.0)))
        }
        _ => Ok(img),
    }
}

/// Loads every manifest entry in order; the record id is the manifest path.
pub fn load_records(manifest: &DatasetManifest, size: Option<usize>) -> Result<Vec<ImageRecord>> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let pixels = load_image(&manifest.resolve(e), size)?;
            ImageRecord::new(e.path.clone(), pixels, e.label)
        })
        .collect()
}
