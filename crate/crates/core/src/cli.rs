//! The `aecnn` command-line tool.
//!
//! [`run`] parses arguments, executes one subcommand and returns its exit
//! code: 0 success, 1 runtime or I/O failure, 2 invalid flags, config or
//! input, 3 `score --alert` found an anomaly. Files are written under a
//! temporary name and renamed into place once complete.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{
    gen_synth, load_records, read_pgm, split_manifest, AugmentPolicy, DatasetManifest, ImageRecord, Label,
};
use crate::error::Error;
use crate::eval::{
    build_histogram, calibrate_threshold, classify, emit_report, reconstruction_error, roc_auc, score_records,
    ScoreRecord, ThresholdMethod, ThresholdSpec, DEFAULT_BINS,
};
use crate::model::{build, load_checkpoint, encode_checkpoint, AutoencoderModel, HeadConfig, ModelConfig, Stage};
use crate::trainer::{OptimizerConfig, TrainConfig, Trainer};

pub const EXIT_OK: u8 = 0;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_ALERT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "aecnn", version, about = "Autoencoder anomaly detection for grayscale images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset of normal and anomalous PGM images plus manifest.csv.
    GenSynth(GenSynthArgs),
    /// Partition a manifest into train/val/test (and val+test as heldout) manifests next to it.
    Split(SplitArgs),
    /// Train an autoencoder from a run config and write a checkpoint.
    Train(TrainArgs),
    /// Resolve a decision threshold and write it as JSON.
    Calibrate(CalibrateArgs),
    /// Print the reconstruction error and verdict of each image.
    Score(ScoreArgs),
    /// Score a labeled manifest and write histogram, ROC and summary reports.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of normal images.
    #[arg(long, default_value_t = 200, allow_hyphen_values = true)]
    pub normals: usize,
    /// Number of anomalous images.
    #[arg(long, default_value_t = 50, allow_hyphen_values = true)]
    pub anomalies: usize,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 64, allow_hyphen_values = true)]
    pub size: usize,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Train, val and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1], allow_hyphen_values = true)]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run config JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Checkpoint to write. The effective config is written to `<out>.config.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-epoch history CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Normal-only manifest; not needed for `fixed`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// fixed | percentile | meanstd [default: eval.method from --config, else percentile]
    #[arg(long)]
    pub method: Option<ThresholdMethod>,
    /// Threshold, percentile in [0, 1], or k [default: eval.param from --config, else 0.95]
    #[arg(long, allow_hyphen_values = true)]
    pub param: Option<f64>,
    /// Run config whose `eval` section supplies defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Threshold JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// PGM images or `.csv` manifests.
    #[arg(long, num_args = 1.., required = true)]
    pub input: Vec<PathBuf>,
    /// Threshold JSON from `calibrate`.
    #[arg(long)]
    pub threshold: PathBuf,
    /// Print an ALERT line per anomalous image and exit with status 3 if any.
    #[arg(long, default_value_t = false)]
    pub alert: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Manifest with both normal and anomalous entries.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub threshold: PathBuf,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Histogram bins [default: eval.n_bins from --config, else 50]
    #[arg(long)]
    pub bins: Option<usize>,
    /// Run config whose `eval` section supplies defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// JSON run configuration. Every section and key is optional; missing values
/// take the defaults shown by [`RunConfig::default`], and unknown keys are
/// rejected. Relative `data.manifest` paths are resolved against the config
/// file's directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub manifest: PathBuf,
    /// Images are resized to `image_size × image_size` on load.
    pub image_size: usize,
    /// Train, val and test fractions passed to the seeded splitter.
    pub split: [f64; 3],
    pub split_seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            manifest: PathBuf::new(),
            image_size: 64,
            split: [0.8, 0.1, 0.1],
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub encoder: Vec<Stage>,
    pub latent_channels: usize,
    pub decoder: Vec<Stage>,
    pub classifier_head: Option<HeadConfig>,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            encoder: m.encoder,
            latent_channels: m.latent_channels,
            decoder: m.decoder,
            classifier_head: m.classifier_head,
            seed: m.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    pub lambda_cls: f32,
    pub patience: Option<usize>,
    pub seed: u64,
    /// `null` disables augmentation.
    pub augment: Option<AugmentPolicy>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let (beta1, beta2, epsilon) = match OptimizerConfig::adam(1e-3) {
            OptimizerConfig::Adam { beta1, beta2, epsilon, .. } => (beta1, beta2, epsilon),
            OptimizerConfig::Sgd { .. } => unreachable!(),
        };
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            optimizer: OptimizerKind::Adam,
            lr: t.optimizer.lr(),
            beta1,
            beta2,
            epsilon,
            lambda_cls: t.lambda_cls,
            patience: t.early_stop_patience,
            seed: t.seed,
            augment: t.augment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub method: ThresholdMethod,
    pub param: f64,
    pub n_bins: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            method: ThresholdMethod::Percentile,
            param: 0.95,
            n_bins: DEFAULT_BINS,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> crate::Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> crate::Result<()> {
        self.model_config().validate()?;
        let t = &self.train;
        if !(t.lr.is_finite() && t.lr > 0.0) {
            return Err(Error::Config(format!("train.lr must be positive, got {}", t.lr)));
        }
        if self.eval.n_bins == 0 {
            return Err(Error::Config("eval.n_bins must be positive".into()));
        }
        check_method_param(self.eval.method, self.eval.param)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            input_size: self.data.image_size,
            encoder: self.model.encoder.clone(),
            latent_channels: self.model.latent_channels,
            decoder: self.model.decoder.clone(),
            classifier_head: self.model.classifier_head,
            seed: self.model.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        let optimizer = match t.optimizer {
            OptimizerKind::Sgd => OptimizerConfig::Sgd { lr: t.lr },
            OptimizerKind::Adam => OptimizerConfig::Adam {
                lr: t.lr,
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.epsilon,
            },
        };
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            optimizer,
            lambda_cls: t.lambda_cls,
            early_stop_patience: t.patience,
            seed: t.seed,
            augment: t.augment,
        }
    }
}

fn check_method_param(method: ThresholdMethod, param: f64) -> crate::Result<()> {
    if !param.is_finite() {
        return Err(Error::Config(format!("threshold parameter {param} is not finite")));
    }
    if method == ThresholdMethod::Percentile && !(0.0..=1.0).contains(&param) {
        return Err(Error::Config(format!("percentile {param} outside [0, 1]")));
    }
    Ok(())
}

/// A failed subcommand: exit code plus the message printed to stderr.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Checkpoint(_) | Error::Parse { .. } => EXIT_RUNTIME,
            Error::Dimension { .. } | Error::Validation(_) | Error::Config(_) | Error::Unsupported(_) => EXIT_INVALID,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INVALID,
        message: message.into(),
    }
}

fn runtime(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        message: message.into(),
    }
}

type CmdResult = std::result::Result<u8, Failure>;

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
                return EXIT_INVALID;
            }
            let _ = write!(out, "{text}");
            return EXIT_OK;
        }
    };
    let result = match cli.command {
        Command::GenSynth(a) => cmd_gen_synth(&a, out),
        Command::Split(a) => cmd_split(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Calibrate(a) => cmd_calibrate(&a, out),
        Command::Score(a) => cmd_score(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
    };
    let _ = out.flush();
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::result::Result<(), Failure> {
    let tmp = with_suffix(path, ".tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Failure::from(Error::io(&tmp, e)))?;
    std::fs::rename(&tmp, path).map_err(|e| Failure::from(Error::io(path, e)))
}

fn read_text(path: &Path, what: &str) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| runtime(format!("cannot read {what} {}: {e}", path.display())))
}

fn load_manifest(path: &Path) -> std::result::Result<DatasetManifest, Failure> {
    if !path.is_file() {
        return Err(invalid(format!("manifest {} not found", path.display())));
    }
    Ok(DatasetManifest::load(path)?)
}

fn load_run_config(path: &Path) -> std::result::Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
    Ok(RunConfig::from_json(&text)?)
}

fn load_threshold(path: &Path) -> std::result::Result<ThresholdSpec, Failure> {
    Ok(ThresholdSpec::from_json(&read_text(path, "threshold")?)?)
}

fn model_size(model: &AutoencoderModel) -> usize {
    model.config().input_size
}

fn cmd_gen_synth(a: &GenSynthArgs, out: &mut dyn Write) -> CmdResult {
    if a.normals + a.anomalies == 0 {
        return Err(invalid("--normals and --anomalies cannot both be 0"));
    }
    let manifest = gen_synth(a.normals, a.anomalies, a.size, a.seed, &a.out)?;
    let _ = writeln!(out, "manifest: {}", a.out.join("manifest.csv").display());
    let _ = writeln!(out, "normal: {}", manifest.count(Label::Normal));
    let _ = writeln!(out, "anomalous: {}", manifest.count(Label::Anomalous));
    Ok(EXIT_OK)
}

fn cmd_split(a: &SplitArgs, out: &mut dyn Write) -> CmdResult {
    let manifest = load_manifest(&a.manifest)?;
    let ratios: [f64; 3] = a.ratios.as_slice().try_into().map_err(|_| invalid("--ratios needs 3 values"))?;
    let s = split_manifest(&manifest, ratios, a.seed)?;
    let mut heldout = s.val.entries.clone();
    heldout.extend(s.test.entries.iter().cloned());
    let heldout = DatasetManifest::new(manifest.root.clone(), heldout)?;
    let dir = a.manifest.parent().unwrap_or(Path::new(""));
    for (name, m) in [("train", &s.train), ("val", &s.val), ("test", &s.test), ("heldout", &heldout)] {
        let path = dir.join(format!("{name}.csv"));
        write_atomic(&path, m.to_csv().as_bytes())?;
        let _ = writeln!(
            out,
            "{name}: {} ({} normal, {} anomalous)",
            path.display(),
            m.count(Label::Normal),
            m.count(Label::Anomalous)
        );
    }
    Ok(EXIT_OK)
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> CmdResult {
    let cfg = load_run_config(&a.config)?;
    if cfg.data.manifest.as_os_str().is_empty() {
        return Err(invalid("data.manifest is required"));
    }
    let manifest_path = a.config.parent().unwrap_or(Path::new("")).join(&cfg.data.manifest);
    let manifest = load_manifest(&manifest_path)?;
    let splits = split_manifest(&manifest, cfg.data.split, cfg.data.split_seed)?;
    let size = Some(cfg.data.image_size);
    let train_cfg = cfg.train_config();

    let mut train_set = load_records(&splits.train, size)?;
    let val_set = load_records(&splits.val, size)?;
    if train_cfg.lambda_cls > 0.0 {
        // The classification term needs positives, which only held-out
        // splits contain.
        train_set.extend(val_set.iter().filter(|r| r.label == Label::Anomalous).cloned());
    }
    let model = build(&cfg.model_config())?;
    let mut trainer = Trainer::new(model, train_set, val_set, train_cfg)?;
    while trainer.run_epoch()?.is_some() {}
    let (model, history) = trainer.finish();

    write_atomic(&a.out, &encode_checkpoint(&model))?;
    let mut effective = cfg.clone();
    effective.data.manifest = manifest_path;
    write_atomic(&with_suffix(&a.out, ".config.json"), effective.to_json().as_bytes())?;
    if let Some(h) = &a.history {
        let mut buf = Vec::new();
        history.write_csv(&mut buf).expect("in-memory write");
        write_atomic(h, &buf)?;
    }
    let last = history.last().ok_or_else(|| runtime("training ran no epochs"))?;
    let _ = writeln!(out, "epochs: {}", history.records.len());
    let _ = writeln!(out, "train_loss: {}", last.train_loss);
    match last.val_mse {
        Some(v) => writeln!(out, "val_mse: {v}"),
        None => writeln!(out, "val_mse: n/a"),
    }
    .ok();
    if let Some(best) = history.best_epoch {
        let _ = writeln!(out, "best_epoch: {best}");
    }
    let _ = writeln!(out, "checkpoint: {}", a.out.display());
    Ok(EXIT_OK)
}

fn eval_defaults(config: &Option<PathBuf>) -> std::result::Result<EvalSection, Failure> {
    match config {
        Some(p) => Ok(load_run_config(p)?.eval),
        None => Ok(EvalSection::default()),
    }
}

fn cmd_calibrate(a: &CalibrateArgs, out: &mut dyn Write) -> CmdResult {
    let defaults = eval_defaults(&a.config)?;
    let method = a.method.unwrap_or(defaults.method);
    let param = a.param.unwrap_or(defaults.param);
    check_method_param(method, param)?;
    let model = load_checkpoint(&a.ckpt)?;

    let spec = if method == ThresholdMethod::Fixed {
        ThresholdSpec::fixed(param)
    } else {
        let path = a
            .manifest
            .as_ref()
            .ok_or_else(|| invalid(format!("--manifest is required for method {method}")))?;
        let manifest = load_manifest(path)?;
        let foreign = manifest.entries.iter().filter(|e| e.label != Label::Normal).count();
        if foreign > 0 {
            return Err(invalid(format!(
                "calibration manifest must be normal-only, found {foreign} other entries"
            )));
        }
        let records = load_records(&manifest, Some(model_size(&model)))?;
        let errors: Vec<f64> = score_records(&model, &records)?.iter().map(|s| s.error as f64).collect();
        calibrate_threshold(&errors, method, param)?
    };
    write_atomic(&a.out, spec.to_json().as_bytes())?;
    let _ = writeln!(out, "method: {}", spec.method);
    let _ = writeln!(out, "param: {}", spec.param);
    let _ = writeln!(out, "threshold: {}", spec.value);
    Ok(EXIT_OK)
}

fn is_manifest(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn cmd_score(a: &ScoreArgs, out: &mut dyn Write) -> CmdResult {
    let threshold = load_threshold(&a.threshold)?;
    let model = load_checkpoint(&a.ckpt)?;
    let mut items: Vec<(String, PathBuf)> = Vec::new();
    for input in &a.input {
        if is_manifest(input) {
            let m = load_manifest(input)?;
            items.extend(m.entries.iter().map(|e| (e.path.clone(), m.resolve(e))));
        } else {
            items.push((input.display().to_string(), input.clone()));
        }
    }
    let expected = model.input_dims();
    let mut scored = Vec::with_capacity(items.len());
    for (id, path) in items {
        let img = read_pgm(&path).map_err(|e| runtime(format!("cannot read image {}: {e}", path.display())))?;
        if img.dims() != expected {
            return Err(invalid(format!(
                "image {id} has shape {:?} but the model expects {expected:?}",
                img.dims()
            )));
        }
        let error = reconstruction_error(&model, &img)?;
        scored.push((id, error, classify(error as f64, &threshold)));
    }
    for (id, error, verdict) in &scored {
        let _ = writeln!(out, "{id}\t{error}\t{verdict}");
    }
    if !a.alert {
        return Ok(EXIT_OK);
    }
    let mut alerted = false;
    for (id, error, verdict) in &scored {
        if *verdict == Label::Anomalous {
            let _ = writeln!(out, "ALERT {id} {error}");
            alerted = true;
        }
    }
    Ok(if alerted { EXIT_ALERT } else { EXIT_OK })
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> CmdResult {
    let defaults = eval_defaults(&a.config)?;
    let n_bins = a.bins.unwrap_or(defaults.n_bins);
    if n_bins == 0 {
        return Err(invalid("--bins must be positive"));
    }
    let manifest = load_manifest(&a.manifest)?;
    let (n_norm, n_anom) = (manifest.count(Label::Normal), manifest.count(Label::Anomalous));
    if n_norm == 0 || n_anom == 0 {
        return Err(invalid(format!(
            "evaluation needs normal and anomalous entries, found {n_norm} normal and {n_anom} anomalous"
        )));
    }
    let threshold = load_threshold(&a.threshold)?;
    let model = load_checkpoint(&a.ckpt)?;
    let records: Vec<ImageRecord> = load_records(&manifest, Some(model_size(&model)))?;
    let scores = score_records(&model, &records)?;
    let errors: Vec<f64> = scores.iter().map(|s| s.error as f64).collect();
    let hist = build_histogram(&errors, n_bins)?;
    let labeled: Vec<ScoreRecord> = scores.iter().filter(|s| s.label != Label::Unlabeled).cloned().collect();
    let roc = roc_auc(&labeled)?;
    emit_report(&scores, &hist, &threshold, Some(&roc), &a.out)?;
    let _ = writeln!(out, "scored: {}", scores.len());
    let _ = writeln!(out, "threshold: {}", threshold.value);
    let _ = writeln!(out, "report: {}", a.out.display());
    let _ = writeln!(out, "AUC: {}", roc.auc);
    Ok(EXIT_OK)
}
