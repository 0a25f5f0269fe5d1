//! Synthetic "chest film" corpus: two bright elliptical fields on a dark
//! background, with an optional bright disk inside one field as the anomaly.

use std::path::Path;

use super::{save_pgm, DatasetManifest, Label, ManifestEntry, SeededRng};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const BACKGROUND: f64 = 0.1;
const FIELD_INTENSITY: f64 = 0.6;
const NOISE_SIGMA: f64 = 0.02;
const LESION_BOOST: f32 = 0.4;

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.cx) / self.rx;
        let dy = (y - self.cy) / self.ry;
        dx * dx + dy * dy <= 1.0
    }
}

fn jittered_fields(size: usize, rng: &mut SeededRng) -> [(Ellipse, f64); 2] {
    let s = size as f64;
    let mut field = |cx: f64| {
        let cx = s * (cx + rng.uniform_range(-0.05, 0.05));
        let cy = s * (0.5 + rng.uniform_range(-0.05, 0.05));
        let rx = s * 0.15 * rng.uniform_range(0.9, 1.1);
        let ry = s * 0.30 * rng.uniform_range(0.9, 1.1);
        let intensity = FIELD_INTENSITY + rng.uniform_range(-0.1, 0.1);
        (Ellipse { cx, cy, rx, ry }, intensity)
    };
    [field(0.3), field(0.7)]
}

fn render(size: usize, rng: &mut SeededRng) -> (Tensor, [(Ellipse, f64); 2]) {
    let fields = jittered_fields(size, rng);
    let mut img = Tensor::zeros(&[1, size, size]);
    for (i, v) in img.data_mut().iter_mut().enumerate() {
        let (x, y) = ((i % size) as f64 + 0.5, (i / size) as f64 + 0.5);
        let mut value = BACKGROUND;
        for (e, intensity) in &fields {
            if e.contains(x, y) {
                value = *intensity;
            }
        }
        *v = (value + NOISE_SIGMA * rng.normal()).clamp(0.0, 1.0) as f32;
    }
    (img, fields)
}

/// A normal image drawn from `rng`.
pub fn render_normal(size: usize, rng: &mut SeededRng) -> Tensor {
    render(size, rng).0
}

/// A normal image and its anomalous counterpart: the same image with one
/// bright disk (radius 8–16% of the side) placed inside a field.
pub fn render_pair(size: usize, rng: &mut SeededRng) -> (Tensor, Tensor) {
    let (base, fields) = render(size, rng);
    let s = size as f64;
    let (e, _) = fields[rng.below(2)];
    let radius = s * rng.uniform_range(0.08, 0.16);
    let theta = rng.uniform_range(0.0, std::f64::consts::TAU);
    let rho = 0.6 * rng.uniform().sqrt();
    let (cx, cy) = (e.cx + rho * e.rx * theta.cos(), e.cy + rho * e.ry * theta.sin());
    let mut lesion = base.clone();
    for (i, v) in lesion.data_mut().iter_mut().enumerate() {
        let (x, y) = ((i % size) as f64 + 0.5, (i / size) as f64 + 0.5);
        if (x - cx).powi(2) + (y - cy).powi(2) <= radius * radius {
            *v = (*v + LESION_BOOST).min(1.0);
        }
    }
    (base, lesion)
}

pub fn render_anomalous(size: usize, rng: &mut SeededRng) -> Tensor {
    render_pair(size, rng).1
}

/// Per-image stream: normal `i` uses index `2i`, anomalous `j` uses `2j+1`,
/// so adding images of one class never changes the other.
pub fn synth_image(size: usize, seed: u64, label: Label, index: usize) -> Tensor {
    match label {
        Label::Anomalous => render_anomalous(size, &mut SeededRng::derive(seed, 2 * index as u64 + 1)),
        _ => render_normal(size, &mut SeededRng::derive(seed, 2 * index as u64)),
    }
}

/// Writes `normal_NNNN.pgm`, `anomalous_NNNN.pgm` and `manifest.csv` into
/// `out_dir`.
pub fn gen_synth(n_normal: usize, n_anomalous: usize, size: usize, seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    if size < 16 {
        return Err(Error::Validation(format!("synthetic image size {size} must be at least 16")));
    }
    let mut entries = Vec::with_capacity(n_normal + n_anomalous);
    if n_normal + n_anomalous > 0 {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }
    for (label, count) in [(Label::Normal, n_normal), (Label::Anomalous, n_anomalous)] {
        for i in 0..count {
            let name = format!("{}_{i:04}.pgm", label.as_str());
            let img = synth_image(size, seed, label, i);
            save_pgm(&img, &out_dir.join(&name))?;
            entries.push(ManifestEntry { path: name, label });
        }
    }
    let manifest = DatasetManifest::new(out_dir, entries)?;
    if !manifest.is_empty() {
        manifest.save(&out_dir.join("manifest.csv"))?;
    }
    Ok(manifest)
}
