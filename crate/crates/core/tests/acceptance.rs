//! Acceptance suite. Runs each criterion in turn on the calling thread, so
//! runtime budgets are measured without other tests competing for the CPU,
//! prints one PASS/FAIL line per criterion and exits non-zero on any failure.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use aecnn::data::{synth_image, ImageRecord, Label};
use aecnn::error::{CheckpointError, Error};
use aecnn::eval::{calibrate_threshold, reconstruction_error, score_records, ThresholdMethod};
use aecnn::model::{build, load_checkpoint, save_checkpoint, ModelConfig};
use aecnn::trainer::{evaluate_mean_mse, train, OptimizerConfig, TrainConfig};
use common::cli::*;
use common::grad::{self, KERNELS};
use common::*;

/// Published fixed threshold for the clinical chest X-ray model.
const CLINICAL_THRESHOLD: &str = "0.0127";
/// Published AUC on clinical chest X-rays, printed for comparison only.
const CLINICAL_AUC: f64 = 0.55;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, secs: u64) -> bool {
    elapsed <= Duration::from_secs(secs)
}

fn normals(seed: u64, range: std::ops::Range<usize>) -> Vec<ImageRecord> {
    range
        .map(|i| ImageRecord::new(format!("n{i}"), synth_image(64, seed, Label::Normal, i), Label::Normal).unwrap())
        .collect()
}

fn gradient_integrity() -> Outcome {
    let t = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    let mut skipped = 0;
    for seed in 0..20 {
        let mut cases: Vec<(String, GradCheck)> = KERNELS.iter().map(|(n, f)| (n.to_string(), f(seed))).collect();
        cases.push(("ae".into(), grad::autoencoder(seed, 0.0)));
        cases.push(("ae+head".into(), grad::autoencoder(seed, 0.3)));
        for (name, r) in cases {
            checked += r.checked;
            skipped += r.skipped;
            if r.max_rel > worst.0 || worst.1.is_empty() {
                worst = (r.max_rel, format!("{name} seed {seed}"));
            }
        }
    }
    let e = t.elapsed();
    outcome(
        worst.0 <= 1e-3 && within(e, 30),
        format!(
            "10 cases x 20 seeds, {checked} coordinates ({skipped} at kinks), max rel err {:.2e} ({}), {:.1}s",
            worst.0,
            worst.1,
            e.as_secs_f64()
        ),
    )
}

fn conv_oracle() -> Outcome {
    let t = Instant::now();
    let failures: Vec<String> = (0..100).filter_map(|s| conv_oracle_case(s).err()).collect();
    let e = t.elapsed();
    outcome(
        failures.is_empty() && within(e, 10),
        match failures.first() {
            None => format!("100 shapes bit-identical, {:.2}s", e.as_secs_f64()),
            Some(f) => format!("{} of 100 differ, first: {f}", failures.len()),
        },
    )
}

fn overfit() -> Outcome {
    let t = Instant::now();
    let data = normals(11, 0..8);
    let cfg = TrainConfig {
        epochs: 500,
        batch_size: 4,
        optimizer: OptimizerConfig::adam(1e-3),
        augment: None,
        ..TrainConfig::default()
    };
    let (model, _) = train(build(&ModelConfig::default()).unwrap(), &data, &[], &cfg).unwrap();
    let mse = evaluate_mean_mse(&model, &data).unwrap();
    let e = t.elapsed();
    outcome(
        mse <= 1e-3 && within(e, 120),
        format!("train MSE {mse:.3e} after 500 epochs (target <= 1e-3), {:.1}s", e.as_secs_f64()),
    )
}

fn train_command(dir: &Path, epochs: usize) -> String {
    ok(dir, &["gen-synth", "--out", "data", "--normals", "200", "--anomalies", "50", "--size", "64", "--seed", "7"]);
    let split = ok(dir, &["split", "--manifest", "data/manifest.csv"]);
    fs::write(dir.join("run.json"), run_config("data/manifest.csv", 64, false, epochs)).unwrap();
    let train = ok(dir, &["train", "--config", "run.json", "--out", "model.ckpt"]);
    let cal = ok(dir, &["calibrate", "--ckpt", "model.ckpt", "--manifest", "data/train.csv", "--config", "run.json", "--out", "threshold.json"]);
    let eval = ok(dir, &["eval", "--ckpt", "model.ckpt", "--manifest", "data/heldout.csv", "--threshold", "threshold.json", "--config", "run.json", "--out", "report"]);
    [split, train, cal, eval].concat()
}

fn benchmark(dir: &Path) -> Outcome {
    let t = Instant::now();
    let stdout = train_command(dir, 100);
    let e = t.elapsed();
    let heldout = fs::read_to_string(dir.join("data/heldout.csv")).unwrap();
    let n_norm = heldout.lines().filter(|l| l.ends_with(",normal")).count();
    let n_anom = heldout.lines().filter(|l| l.ends_with(",anomalous")).count();
    let train_n = fs::read_to_string(dir.join("data/train.csv")).unwrap().lines().count() - 1;
    let auc: f64 = field(&stdout, "AUC").unwrap().parse().unwrap();
    let shape_ok = (train_n, n_norm, n_anom) == (160, 40, 50);
    outcome(
        shape_ok && auc >= 0.90 && within(e, 300),
        format!(
            "AUC {auc:.4} on {n_norm} normal + {n_anom} anomalous after 100 epochs on {train_n} normals, {:.1}s (clinical reference {CLINICAL_AUC})",
            e.as_secs_f64()
        ),
    )
}

fn calibration() -> Outcome {
    let t = Instant::now();
    let mut fprs = Vec::new();
    for seed in 0..5u64 {
        let train_set = normals(100 + seed, 0..160);
        let held = normals(100 + seed, 160..260);
        let cfg = TrainConfig {
            epochs: 10,
            seed,
            ..TrainConfig::default()
        };
        let mcfg = ModelConfig {
            seed,
            ..ModelConfig::default()
        };
        let (model, _) = train(build(&mcfg).unwrap(), &train_set, &[], &cfg).unwrap();
        let errs: Vec<f64> = score_records(&model, &train_set).unwrap().iter().map(|s| s.error as f64).collect();
        let th = calibrate_threshold(&errs, ThresholdMethod::Percentile, 0.95).unwrap();
        let flagged = score_records(&model, &held).unwrap().iter().filter(|s| s.error as f64 > th.value).count();
        fprs.push(flagged as f64 / held.len() as f64);
    }
    let passing = fprs.iter().filter(|&&f| (0.0..=0.12).contains(&f)).count();
    outcome(
        passing >= 4,
        format!("FPR per seed {fprs:?}, {passing}/5 within [0, 0.12], {:.1}s", t.elapsed().as_secs_f64()),
    )
}

fn auc_oracle() -> Outcome {
    let worst = (0..1000).map(auc_gap).fold(0.0f64, f64::max);
    outcome(worst <= 1e-9, format!("1000 instances, max |trapezoid - Mann-Whitney| {worst:.1e}"))
}

/// Recovers the data value under the threshold line from the plot geometry:
/// a 640-wide canvas with 56 px left and 16 px right margins spanning the
/// histogram range widened to include the threshold.
fn threshold_from_svg(svg: &str, hist_csv: &str, threshold: f64) -> Option<f64> {
    let x = svg_attr(svg, "<line class=\"threshold\"", "x1")?;
    let rows: Vec<Vec<f64>> = hist_csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let lo = rows.first()?[0].min(threshold);
    let hi = rows.last()?[1].max(threshold);
    Some(lo + (x - 56.0) / (640.0 - 56.0 - 16.0) * (hi - lo))
}

fn figure_shape(dir: &Path) -> Outcome {
    let hist = fs::read_to_string(dir.join("report/histogram.csv")).unwrap();
    let svg = fs::read_to_string(dir.join("report/histogram.svg")).unwrap();
    let scored = fs::read_to_string(dir.join("report/scores.csv")).unwrap().lines().count() - 1;
    let total = histogram_total(&hist);
    let bars = count_matches(&svg, "<rect class=\"bar\"");
    let lines = count_matches(&svg, "<line class=\"threshold\"");
    let first = total == scored && bars == 50 && lines == 1;

    ok(dir, &["calibrate", "--ckpt", "model.ckpt", "--method", "fixed", "--param", CLINICAL_THRESHOLD, "--out", "fixed.json"]);
    ok(dir, &["eval", "--ckpt", "model.ckpt", "--manifest", "data/heldout.csv", "--threshold", "fixed.json", "--out", "fixed_report"]);
    let p_svg = fs::read_to_string(dir.join("fixed_report/histogram.svg")).unwrap();
    let p_hist = fs::read_to_string(dir.join("fixed_report/histogram.csv")).unwrap();
    let summary = fs::read_to_string(dir.join("fixed_report/summary.txt")).unwrap();
    let want: f64 = CLINICAL_THRESHOLD.parse().unwrap();
    let at = threshold_from_svg(&p_svg, &p_hist, want).unwrap_or(f64::NAN);
    // x1 is printed to 1e-3 px; one pixel spans (range / 568) in value.
    let px = {
        let lo = p_hist.lines().nth(1).unwrap().split(',').next().unwrap().parse::<f64>().unwrap().min(want);
        let hi = p_hist.lines().last().unwrap().split(',').nth(1).unwrap().parse::<f64>().unwrap().max(want);
        (hi - lo) / 568.0
    };
    let second = (at - want).abs() <= 1e-3 * px
        && count_matches(&p_svg, "<line class=\"threshold\"") == 1
        && field(&summary, "threshold_value") == Some(CLINICAL_THRESHOLD);
    outcome(
        first && second,
        format!(
            "histogram sums to {total} of {scored} scored, {bars} bars, {lines} threshold line; fixed {CLINICAL_THRESHOLD} drawn at {at:.6}"
        ),
    )
}

fn pipeline_snapshot(dir: &Path) -> (String, Vec<(String, Vec<u8>)>) {
    let stdout = train_command(dir, 5);
    let mut files = vec!["model.ckpt".to_string(), "threshold.json".to_string()];
    files.extend(aecnn::eval::REPORT_FILES.iter().map(|f| format!("report/{f}")));
    (stdout, files.into_iter().map(|f| (f.clone(), fs::read(dir.join(&f)).unwrap())).collect())
}

fn determinism() -> Outcome {
    let t = Instant::now();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (out_a, files_a) = pipeline_snapshot(a.path());
    let (out_b, files_b) = pipeline_snapshot(b.path());
    let differing: Vec<&str> = files_a
        .iter()
        .zip(&files_b)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    outcome(
        differing.is_empty() && out_a == out_b,
        format!(
            "{} files compared, differing {differing:?}, stdout identical: {}, {:.1}s",
            files_a.len(),
            out_a == out_b,
            t.elapsed().as_secs_f64()
        ),
    )
}

fn checkpoint_round_trip() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let data = normals(21, 0..8);
    let cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let (model, _) = train(build(&ModelConfig::default()).unwrap(), &data, &[], &cfg).unwrap();
    let path = tmp.path().join("m.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    let images: Vec<_> = (0..50)
        .map(|i| synth_image(64, 22, if i % 2 == 0 { Label::Normal } else { Label::Anomalous }, i))
        .collect();
    let same = images.iter().all(|x| {
        reconstruction_error(&model, x).unwrap().to_bits() == reconstruction_error(&loaded, x).unwrap().to_bits()
    });

    let bytes = fs::read(&path).unwrap();
    let mut bad_magic = bytes.clone();
    bad_magic[0] ^= 0xff;
    fs::write(&path, &bad_magic).unwrap();
    let magic_err = load_checkpoint(&path).err();
    fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let trunc_err = load_checkpoint(&path).err();
    let magic_ok = matches!(magic_err, Some(Error::Checkpoint(CheckpointError::BadMagic { .. })));
    let trunc_ok = matches!(trunc_err, Some(Error::Checkpoint(CheckpointError::LengthMismatch { .. })));
    outcome(
        same && magic_ok && trunc_ok,
        format!(
            "50 errors bit-identical: {same}; bad magic -> {}; truncated -> {}",
            magic_err.map_or("no error".into(), |e| e.to_string()),
            trunc_err.map_or("no error".into(), |e| e.to_string())
        ),
    )
}

fn main() -> ExitCode {
    let bench_dir = tempfile::tempdir().unwrap();
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome>)> = vec![
        ("gradient integrity", Box::new(gradient_integrity)),
        ("convolution oracle", Box::new(conv_oracle)),
        ("overfit sanity", Box::new(overfit)),
        ("synthetic benchmark", Box::new(|| benchmark(bench_dir.path()))),
        ("percentile calibration", Box::new(calibration)),
        ("AUC oracle equivalence", Box::new(auc_oracle)),
        ("histogram report shape", Box::new(|| figure_shape(bench_dir.path()))),
        ("determinism", Box::new(determinism)),
        ("checkpoint round trip", Box::new(checkpoint_round_trip)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let o = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                outcome(false, format!("panicked: {msg}"))
            });
        failed += usize::from(!o.pass);
        println!("{} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
