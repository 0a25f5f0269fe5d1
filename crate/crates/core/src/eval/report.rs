use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{classify, confusion, Histogram, RocCurve, ScoreRecord, ThresholdSpec};
use crate::error::{Error, Result};

pub const REPORT_FILES: [&str; 5] = ["scores.csv", "histogram.csv", "roc.csv", "summary.txt", "histogram.svg"];

/// Geometry of the histogram chart. The x axis spans the histogram range,
/// widened if needed so the threshold line is always inside the plot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvgLayout {
    pub width: f64,
    pub height: f64,
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl SvgLayout {
    pub fn new(hist: &Histogram, threshold: f64) -> Self {
        let (lo, hi) = hist.range();
        Self {
            width: 640.0,
            height: 360.0,
            left: 56.0,
            right: 16.0,
            top: 16.0,
            bottom: 40.0,
            x_min: lo.min(threshold),
            x_max: hi.max(threshold),
        }
    }

    pub fn plot_width(&self) -> f64 {
        self.width - self.left - self.right
    }

    pub fn plot_height(&self) -> f64 {
        self.height - self.top - self.bottom
    }

    pub fn x_of(&self, value: f64) -> f64 {
        self.left + (value - self.x_min) / (self.x_max - self.x_min) * self.plot_width()
    }

    pub fn baseline(&self) -> f64 {
        self.height - self.bottom
    }
}

/// Bar chart of the histogram with one vertical line at the threshold.
/// Contains exactly one `<rect>` per bin and a single `<line>`.
pub fn render_histogram_svg(hist: &Histogram, threshold: &ThresholdSpec) -> String {
    let l = SvgLayout::new(hist, threshold.value);
    let max_count = hist.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = l.width,
        h = l.height
    );
    let _ = writeln!(s, "<title>Histogram of reconstruction errors</title>");
    let _ = writeln!(
        s,
        r#"<path class="axes" d="M{:.3} {:.3} V{:.3} H{:.3}" fill="none" stroke="black"/>"#,
        l.left,
        l.top,
        l.baseline(),
        l.width - l.right
    );
    for (i, &count) in hist.counts.iter().enumerate() {
        let x0 = l.x_of(hist.bin_edges[i]);
        let x1 = l.x_of(hist.bin_edges[i + 1]);
        let h = count as f64 / max_count * l.plot_height();
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#4c78a8" stroke="white" stroke-width="0.5"/>"##,
            x0,
            l.baseline() - h,
            (x1 - x0).max(0.0),
            h
        );
    }
    let tx = l.x_of(threshold.value);
    let _ = writeln!(
        s,
        r#"<line class="threshold" x1="{tx:.3}" y1="{:.3}" x2="{tx:.3}" y2="{:.3}" stroke="red" stroke-width="2" stroke-dasharray="6 4"/>"#,
        l.top,
        l.baseline()
    );
    let label_y = l.baseline() + 16.0;
    let _ = writeln!(s, r#"<text x="{:.3}" y="{label_y:.3}" font-size="11" text-anchor="start">{}</text>"#, l.left, l.x_min);
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{label_y:.3}" font-size="11" text-anchor="end">{}</text>"#,
        l.width - l.right,
        l.x_max
    );
    let _ = writeln!(
        s,
        r#"<text x="{tx:.3}" y="{:.3}" font-size="11" fill="red" text-anchor="middle">threshold {}</text>"#,
        l.top + 12.0,
        threshold.value
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" font-size="11" text-anchor="end">{}</text>"#,
        l.left - 4.0,
        l.top + 4.0,
        max_count
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" font-size="12" text-anchor="middle">reconstruction error</text>"#,
        l.left + l.plot_width() / 2.0,
        l.height - 6.0
    );
    s.push_str("</svg>\n");
    s
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory csv")
}

fn scores_csv(scores: &[ScoreRecord], threshold: &ThresholdSpec) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(["id", "error", "label", "verdict"]).expect("in-memory csv");
    for s in scores {
        let verdict = classify(s.error as f64, threshold);
        w.write_record([
            s.id.as_str(),
            &s.error.to_string(),
            s.label.as_str(),
            verdict.as_str(),
        ])
        .expect("in-memory csv");
    }
    finish(w)
}

fn histogram_csv(hist: &Histogram) -> Vec<u8> {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (i, c) in hist.counts.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", hist.bin_edges[i], hist.bin_edges[i + 1], c);
    }
    out.into_bytes()
}

fn roc_csv(roc: &RocCurve) -> Vec<u8> {
    let mut out = String::from("fpr,tpr\n");
    for (fpr, tpr) in &roc.points {
        let _ = writeln!(out, "{fpr},{tpr}");
    }
    out.into_bytes()
}

/// `key: value` lines describing a scored set.
pub fn summary_text(scores: &[ScoreRecord], threshold: &ThresholdSpec, roc: Option<&RocCurve>) -> String {
    let n = scores.len();
    let mean = scores.iter().map(|s| s.error as f64).sum::<f64>() / n.max(1) as f64;
    let max = scores.iter().map(|s| s.error).fold(0.0f32, f32::max);
    let c = confusion(scores, threshold);
    let mut s = String::new();
    let _ = writeln!(s, "count: {n}");
    let _ = writeln!(s, "mean_error: {mean}");
    let _ = writeln!(s, "max_error: {max}");
    let _ = writeln!(s, "threshold_method: {}", threshold.method);
    let _ = writeln!(s, "threshold_param: {}", threshold.param);
    let _ = writeln!(s, "threshold_value: {}", threshold.value);
    match roc {
        Some(r) => {
            let _ = writeln!(s, "auc: {}", r.auc);
        }
        None => s.push_str("auc: n/a\n"),
    }
    let _ = writeln!(s, "tp: {}", c.tp);
    let _ = writeln!(s, "fp: {}", c.fp);
    let _ = writeln!(s, "tn: {}", c.tn);
    let _ = writeln!(s, "fn: {}", c.fn_);
    let _ = writeln!(s, "unlabeled: {}", c.unlabeled);
    s
}

/// Writes the report set into `out_dir`. Every file is first written under a
/// `.tmp` name and the whole set is renamed into place only after all writes
/// succeeded.
pub fn emit_report(
    scores: &[ScoreRecord],
    hist: &Histogram,
    threshold: &ThresholdSpec,
    roc: Option<&RocCurve>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if hist.total() != scores.len() {
        return Err(Error::Validation(format!(
            "histogram holds {} errors but {} records were scored",
            hist.total(),
            scores.len()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let empty_roc = RocCurve {
        points: vec![],
        auc: f64::NAN,
    };
    let contents: [Vec<u8>; 5] = [
        scores_csv(scores, threshold),
        histogram_csv(hist),
        roc_csv(roc.unwrap_or(&empty_roc)),
        summary_text(scores, threshold, roc).into_bytes(),
        render_histogram_svg(hist, threshold).into_bytes(),
    ];
    let mut staged = Vec::with_capacity(REPORT_FILES.len());
    for (name, bytes) in REPORT_FILES.iter().zip(&contents) {
        let tmp = out_dir.join(format!(".{name}.tmp"));
        if let Err(e) = std::fs::write(&tmp, bytes) {
            for (t, _) in &staged {
                let _ = std::fs::remove_file(t);
            }
            return Err(Error::io(&tmp, e));
        }
        staged.push((tmp, out_dir.join(name)));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, dst) in staged {
        std::fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))?;
        written.push(dst);
    }
    Ok(written)
}
