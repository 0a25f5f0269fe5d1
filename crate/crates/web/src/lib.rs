//! WebAssembly bindings for the demo page in `www/`.
//!
//! The page can preview synthetic images, train a small autoencoder one
//! epoch at a time, and move a threshold over the held-out error histogram.

use aecnn::data::{synth_image, ImageRecord, Label};
use aecnn::eval::{
    build_histogram, calibrate_threshold, confusion, render_histogram_svg, roc_auc, score_records, ScoreRecord,
    ThresholdMethod, ThresholdSpec,
};
use aecnn::model::{build, ModelConfig, Stage};
use aecnn::trainer::{TrainConfig, Trainer};
use aecnn::Tensor;
use wasm_bindgen::prelude::*;

/// Held-out images per class.
pub const HELD_OUT: usize = 24;
const MAX_EPOCHS: usize = 1000;

/// `[1, H, W]` pixels in `[0, 1]` as opaque RGBA bytes for `ImageData`.
pub fn to_rgba(img: &Tensor) -> Vec<u8> {
    img.data()
        .iter()
        .flat_map(|&v| {
            let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [g, g, g, 255]
        })
        .collect()
}

fn label(anomalous: bool) -> Label {
    if anomalous {
        Label::Anomalous
    } else {
        Label::Normal
    }
}

#[wasm_bindgen]
pub fn synth_rgba(size: usize, seed: u32, anomalous: bool, index: usize) -> Vec<u8> {
    to_rgba(&synth_image(size, seed as u64, label(anomalous), index))
}

/// Two-level model scaled down so an epoch takes under a second in
/// the browser.
pub fn demo_config(size: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        input_size: size,
        encoder: vec![Stage::Conv(8), Stage::Pool, Stage::Conv(16), Stage::Pool],
        latent_channels: 4,
        decoder: vec![Stage::Upsample, Stage::Conv(16), Stage::Upsample, Stage::Conv(8)],
        classifier_head: None,
        seed,
    }
}

fn err(e: aecnn::Error) -> String {
    e.to_string()
}

#[wasm_bindgen]
pub struct Session {
    trainer: Trainer,
    train: Vec<ImageRecord>,
    held: Vec<ImageRecord>,
    scores: Vec<ScoreRecord>,
    train_errors: Vec<f64>,
}

#[wasm_bindgen]
impl Session {
    /// Synthesizes `n_train` normals for training and `HELD_OUT` normal and
    /// anomalous images for evaluation, all from `seed`.
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, n_train: usize, seed: u32) -> Result<Session, String> {
        let seed = seed as u64;
        let record = |i: usize, l: Label| ImageRecord::new(format!("{}_{i}", l.as_str()), synth_image(size, seed, l, i), l);
        let train = (0..n_train).map(|i| record(i, Label::Normal)).collect::<aecnn::Result<Vec<_>>>().map_err(err)?;
        let mut held = (n_train..n_train + HELD_OUT)
            .map(|i| record(i, Label::Normal))
            .collect::<aecnn::Result<Vec<_>>>()
            .map_err(err)?;
        for i in 0..HELD_OUT {
            held.push(record(i, Label::Anomalous).map_err(err)?);
        }
        let model = build(&demo_config(size, seed)).map_err(err)?;
        let cfg = TrainConfig {
            epochs: MAX_EPOCHS,
            batch_size: 8,
            seed,
            ..TrainConfig::default()
        };
        let trainer = Trainer::new(model, train.clone(), Vec::new(), cfg).map_err(err)?;
        Ok(Session {
            trainer,
            train,
            held,
            scores: Vec::new(),
            train_errors: Vec::new(),
        })
    }

    /// Runs one epoch and returns its mean training loss.
    pub fn train_epoch(&mut self) -> Result<f64, String> {
        let rec = self.trainer.run_epoch().map_err(err)?;
        self.scores.clear();
        self.train_errors.clear();
        rec.map(|r| r.train_loss).ok_or_else(|| format!("reached the {MAX_EPOCHS}-epoch limit"))
    }

    pub fn epochs(&self) -> usize {
        self.trainer.history().records.len()
    }

    /// Held-out image `index` of the given class and its reconstruction,
    /// side by side as RGBA for a `2·size × size` canvas.
    pub fn pair_rgba(&self, index: usize, anomalous: bool) -> Result<Vec<u8>, String> {
        let i = index % HELD_OUT + if anomalous { HELD_OUT } else { 0 };
        let x = &self.held[i].pixels;
        let y = self.trainer.model().reconstruct(x).map_err(err)?;
        let (a, b) = (to_rgba(x), to_rgba(&y));
        let row = x.dims()[2] * 4;
        Ok(a.chunks(row).zip(b.chunks(row)).flat_map(|(l, r)| l.iter().chain(r).copied()).collect())
    }

    /// Scores the held-out set and returns the AUC.
    pub fn evaluate(&mut self) -> Result<f64, String> {
        let model = self.trainer.model();
        self.scores = score_records(model, &self.held).map_err(err)?;
        self.train_errors = score_records(model, &self.train)
            .map_err(err)?
            .iter()
            .map(|s| s.error as f64)
            .collect();
        Ok(roc_auc(&self.scores).map_err(err)?.auc)
    }

    fn require_scores(&self) -> Result<(), String> {
        if self.scores.is_empty() {
            Err("call evaluate() first".into())
        } else {
            Ok(())
        }
    }

    /// Percentile `p` of the training errors.
    pub fn percentile_threshold(&self, p: f64) -> Result<f64, String> {
        self.require_scores()?;
        Ok(calibrate_threshold(&self.train_errors, ThresholdMethod::Percentile, p).map_err(err)?.value)
    }

    /// Smallest and largest held-out error.
    pub fn error_range(&self) -> Vec<f64> {
        let e = self.scores.iter().map(|s| s.error as f64);
        vec![e.clone().fold(f64::INFINITY, f64::min), e.fold(f64::NEG_INFINITY, f64::max)]
    }

    pub fn histogram_svg(&self, threshold: f64, bins: usize) -> Result<String, String> {
        self.require_scores()?;
        let errors: Vec<f64> = self.scores.iter().map(|s| s.error as f64).collect();
        let hist = build_histogram(&errors, bins).map_err(err)?;
        Ok(render_histogram_svg(&hist, &ThresholdSpec::fixed(threshold)))
    }

    /// `[tp, fp, tn, fn]` at `threshold`.
    pub fn confusion(&self, threshold: f64) -> Vec<u32> {
        let c = confusion(&self.scores, &ThresholdSpec::fixed(threshold));
        [c.tp, c.fp, c.tn, c.fn_].iter().map(|&v| v as u32).collect()
    }

    /// ROC points flattened as `fpr0, tpr0, fpr1, tpr1, …`.
    pub fn roc_points(&self) -> Result<Vec<f64>, String> {
        self.require_scores()?;
        Ok(roc_auc(&self.scores).map_err(err)?.points.iter().flat_map(|&(f, t)| [f, t]).collect())
    }
}
