//! Reconstruction-error scoring, the error histogram, threshold calibration,
//! the normal/anomalous decision and ROC analysis.
//!
//! The anomalous class is the positive class throughout, and a larger
//! reconstruction error ranks an image as more anomalous.

mod report;

pub use report::{emit_report, render_histogram_svg, summary_text, SvgLayout, REPORT_FILES};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{ImageRecord, Label};
use crate::error::{Error, Result};
use crate::model::AutoencoderModel;
use crate::optim::mse_loss;
use crate::tensor::Tensor;

pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub error: f32,
    pub label: Label,
}

/// Mean squared difference between an image and its reconstruction.
pub fn reconstruction_error(model: &AutoencoderModel, img: &Tensor) -> Result<f32> {
    let recon = model.reconstruct(img)?;
    Ok(mse_loss(&recon, img)?.value)
}

pub fn score_records(model: &AutoencoderModel, records: &[ImageRecord]) -> Result<Vec<ScoreRecord>> {
    records
        .iter()
        .map(|r| {
            Ok(ScoreRecord {
                id: r.id.clone(),
                error: reconstruction_error(model, &r.pixels)?,
                label: r.label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.bin_edges[0], self.bin_edges[self.bin_edges.len() - 1])
    }
}

/// Uniform bins over `[min, max]`, half-open except the last. A degenerate
/// range `v..v` is widened to `v..v+1e-9`.
pub fn build_histogram(errors: &[f64], n_bins: usize) -> Result<Histogram> {
    if errors.is_empty() {
        return Err(Error::Validation("cannot build a histogram of zero errors".into()));
    }
    if n_bins == 0 {
        return Err(Error::Validation("histogram needs at least one bin".into()));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::Validation("histogram input contains non-finite values".into()));
    }
    let lo = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1e-9;
    }
    let width = (hi - lo) / n_bins as f64;
    let mut edges: Vec<f64> = (0..n_bins).map(|i| lo + width * i as f64).collect();
    edges.push(hi);
    let mut counts = vec![0usize; n_bins];
    for &e in errors {
        let mut idx = (((e - lo) / width).floor() as usize).min(n_bins - 1);
        while idx > 0 && e < edges[idx] {
            idx -= 1;
        }
        while idx + 1 < n_bins && e >= edges[idx + 1] {
            idx += 1;
        }
        counts[idx] += 1;
    }
    Ok(Histogram {
        bin_edges: edges,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    Fixed,
    Percentile,
    #[serde(rename = "meanstd")]
    MeanPlusKStd,
}

impl ThresholdMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdMethod::Fixed => "fixed",
            ThresholdMethod::Percentile => "percentile",
            ThresholdMethod::MeanPlusKStd => "meanstd",
        }
    }
}

impl fmt::Display for ThresholdMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ThresholdMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(ThresholdMethod::Fixed),
            "percentile" => Ok(ThresholdMethod::Percentile),
            "meanstd" | "mean_plus_k_std" => Ok(ThresholdMethod::MeanPlusKStd),
            other => Err(Error::Validation(format!(
                "unknown threshold method {other:?}, expected fixed, percentile or meanstd"
            ))),
        }
    }
}

/// A resolved decision threshold; serialized as `{method, param, value}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSpec {
    pub method: ThresholdMethod,
    pub param: f64,
    pub value: f64,
}

impl ThresholdSpec {
    pub fn fixed(value: f64) -> Self {
        Self {
            method: ThresholdMethod::Fixed,
            param: value,
            value,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("threshold serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("threshold json: {e}")))?;
        if !spec.value.is_finite() {
            return Err(Error::Validation("threshold value must be finite".into()));
        }
        Ok(spec)
    }
}

/// Resolves a threshold from normal-only training errors.
///
/// `percentile(p)` is the lower order statistic `sorted[ceil(p·n) − 1]`;
/// `meanstd(k)` is `mean + k·σ` with the population standard deviation.
pub fn calibrate_threshold(training_errors: &[f64], method: ThresholdMethod, param: f64) -> Result<ThresholdSpec> {
    let value = match method {
        ThresholdMethod::Fixed => param,
        ThresholdMethod::Percentile => {
            if !(0.0..=1.0).contains(&param) {
                return Err(Error::Validation(format!("percentile {param} outside [0, 1]")));
            }
            if training_errors.is_empty() {
                return Err(Error::Validation("percentile calibration needs training errors".into()));
            }
            let mut sorted = training_errors.to_vec();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            // The small slack keeps products like 0.95·100 from rounding up
            // past an exact integer.
            let rank = (param * n as f64 - 1e-9).ceil() as isize - 1;
            sorted[rank.clamp(0, n as isize - 1) as usize]
        }
        ThresholdMethod::MeanPlusKStd => {
            if training_errors.is_empty() {
                return Err(Error::Validation("mean+k·std calibration needs training errors".into()));
            }
            let n = training_errors.len() as f64;
            let mean = training_errors.iter().sum::<f64>() / n;
            let var = training_errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
            mean + param * var.sqrt()
        }
    };
    if !value.is_finite() {
        return Err(Error::Validation(format!("threshold {value} is not finite")));
    }
    Ok(ThresholdSpec { method, param, value })
}

/// Anomalous iff the error strictly exceeds the threshold.
pub fn classify(error: f64, threshold: &ThresholdSpec) -> Label {
    if error > threshold.value {
        Label::Anomalous
    } else {
        Label::Normal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC over every distinct score, swept from the highest down, with the
/// trapezoidal area. Tied scores move the curve diagonally, which credits
/// each tied positive/negative pair with one half.
pub fn roc_auc(scores: &[ScoreRecord]) -> Result<RocCurve> {
    let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(scores.len());
    for s in scores {
        let positive = match s.label {
            Label::Anomalous => true,
            Label::Normal => false,
            Label::Unlabeled => {
                return Err(Error::Validation(format!("record {} is unlabeled", s.id)));
            }
        };
        pairs.push((s.error as f64, positive));
    }
    roc_from_pairs(&pairs)
}

pub fn roc_from_pairs(pairs: &[(f64, bool)]) -> Result<RocCurve> {
    let n_pos = pairs.iter().filter(|p| p.1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Validation(
            "ROC needs at least one normal and one anomalous record".into(),
        ));
    }
    if pairs.iter().any(|p| !p.0.is_finite()) {
        return Err(Error::Validation("ROC scores must be finite".into()));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area2 = 0u128; // twice the area, in units of 1/(P·N)
    let mut i = 0;
    while i < sorted.len() {
        let (prev_tp, prev_fp) = (tp, fp);
        let v = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == v {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += ((fp - prev_fp) * (tp + prev_tp)) as u128;
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    let auc = area2 as f64 / (2.0 * n_pos as f64 * n_neg as f64);
    Ok(RocCurve { points, auc })
}

/// Trapezoidal area under arbitrary `(x, y)` points.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    /// Unlabeled records, which have no ground truth.
    pub unlabeled: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_ + self.unlabeled
    }

    pub fn false_positive_rate(&self) -> f64 {
        self.fp as f64 / (self.fp + self.tn).max(1) as f64
    }
}

pub fn confusion(scores: &[ScoreRecord], threshold: &ThresholdSpec) -> Confusion {
    let mut c = Confusion::default();
    for s in scores {
        let verdict = classify(s.error as f64, threshold);
        match (s.label, verdict) {
            (Label::Anomalous, Label::Anomalous) => c.tp += 1,
            (Label::Anomalous, _) => c.fn_ += 1,
            (Label::Normal, Label::Anomalous) => c.fp += 1,
            (Label::Normal, _) => c.tn += 1,
            (Label::Unlabeled, _) => c.unlabeled += 1,
        }
    }
    c
}
