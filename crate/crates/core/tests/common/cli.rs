//! Runs the `aecnn` binary and reads back what it wrote.

use std::path::Path;
use std::process::{Command, Output};

pub fn aecnn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aecnn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn aecnn")
}

/// Runs and requires the given exit status, reporting stderr otherwise.
pub fn expect_status(dir: &Path, args: &[&str], code: i32) -> String {
    let out = aecnn(dir, args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "aecnn {args:?}\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn ok(dir: &Path, args: &[&str]) -> String {
    expect_status(dir, args, 0)
}

/// Run config JSON for a given corpus, image size and training length.
pub fn run_config(manifest: &str, size: usize, small_model: bool, epochs: usize) -> String {
    let model = if small_model {
        r#""model": {"encoder": [{"conv": 4}, "pool"], "latent_channels": 2, "decoder": ["upsample", {"conv": 4}], "seed": 1},"#
    } else {
        r#""model": {"seed": 1},"#
    };
    format!(
        r#"{{
  "data": {{"manifest": "{manifest}", "image_size": {size}, "split": [0.8, 0.1, 0.1], "split_seed": 0}},
  {model}
  "train": {{"epochs": {epochs}, "batch_size": 16, "seed": 2}},
  "eval": {{"method": "percentile", "param": 0.95, "n_bins": 50}}
}}
"#
    )
}

/// Value of a `key: value` line.
pub fn field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
}

/// Sum of the `count` column of histogram.csv.
pub fn histogram_total(csv: &str) -> usize {
    csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum()
}

pub fn count_matches(svg: &str, needle: &str) -> usize {
    svg.matches(needle).count()
}

/// Numeric value of `attr="…"` on the first element starting with `open`.
pub fn svg_attr(svg: &str, open: &str, attr: &str) -> Option<f64> {
    let start = svg.find(open)?;
    let elem = &svg[start..start + svg[start..].find('>')?];
    let key = format!("{attr}=\"");
    let v = &elem[elem.find(&key)? + key.len()..];
    v[..v.find('"')?].parse().ok()
}
