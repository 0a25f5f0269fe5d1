//! Deterministic mini-batch training with validation tracking and early
//! stopping.
//!
//! Batch order for epoch `e` comes from a stream derived from `(seed, e)`, and
//! augmentation draws for each sample from a stream derived from the same
//! epoch seed and the sample index, so a run is fully determined by its seed,
//! config and corpus.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{augment_tensor, AugmentPolicy, ImageRecord, Label, SeededRng};
use crate::error::{Error, Result};
use crate::eval::reconstruction_error;
use crate::model::AutoencoderModel;
use crate::optim::{adam_step, bce_loss, mse_loss, sgd_step, AdamHyper, AdamState};
use crate::tensor::Tensor;

/// Minimum decrease in validation MSE that counts as an improvement.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd { lr: f32 },
    Adam { lr: f32, beta1: f32, beta2: f32, epsilon: f32 },
}

impl OptimizerConfig {
    pub fn adam(lr: f32) -> Self {
        let h = AdamHyper::default();
        OptimizerConfig::Adam {
            lr,
            beta1: h.beta1,
            beta2: h.beta2,
            epsilon: h.epsilon,
        }
    }

    pub fn lr(&self) -> f32 {
        match *self {
            OptimizerConfig::Sgd { lr } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Weight of the classification loss: `(1−λ)·MSE + λ·BCE`. Zero disables
    /// the head.
    pub lambda_cls: f32,
    pub early_stop_patience: Option<usize>,
    pub seed: u64,
    /// `None` trains on the images as given.
    pub augment: Option<AugmentPolicy>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 16,
            optimizer: OptimizerConfig::adam(1e-3),
            lambda_cls: 0.0,
            early_stop_patience: None,
            seed: 0,
            augment: Some(AugmentPolicy::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Mean reconstruction MSE over the non-anomalous validation images.
    pub val_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub stopped_early: bool,
    /// Epoch whose parameters were returned, when early stopping is enabled.
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,val_mse")?;
        for r in &self.records {
            match r.val_mse {
                Some(v) => writeln!(w, "{},{},{}", r.epoch, r.train_loss, v)?,
                None => writeln!(w, "{},{},", r.epoch, r.train_loss)?,
            }
        }
        Ok(())
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

enum OptState {
    Sgd { lr: f32 },
    Adam { lr: f32, state: AdamState },
}

/// Epoch-at-a-time training driver; [`train`] runs it to completion.
pub struct Trainer {
    model: AutoencoderModel,
    cfg: TrainConfig,
    train: Vec<ImageRecord>,
    val: Vec<ImageRecord>,
    /// Parameters the optimizer updates: everything, or everything except
    /// the classifier head when `lambda_cls == 0`.
    trainable: usize,
    opt: OptState,
    history: TrainHistory,
    best: Option<(f64, Vec<Tensor>)>,
    stale_epochs: usize,
    done: bool,
}

impl Trainer {
    pub fn new(model: AutoencoderModel, train: Vec<ImageRecord>, val: Vec<ImageRecord>, cfg: TrainConfig) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Validation("training set is empty".into()));
        }
        if cfg.epochs == 0 || cfg.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&cfg.lambda_cls) {
            return Err(Error::Config(format!("lambda_cls {} outside [0, 1]", cfg.lambda_cls)));
        }
        if cfg.lambda_cls > 0.0 && !model.has_head() {
            return Err(Error::Config("lambda_cls > 0 requires a classifier head".into()));
        }
        if cfg.lambda_cls == 0.0 && train.iter().any(|r| r.label == Label::Anomalous) {
            return Err(Error::Validation(
                "reconstruction-only training set must not contain anomalous images".into(),
            ));
        }
        if cfg.early_stop_patience == Some(0) {
            return Err(Error::Config("early_stop_patience must be positive".into()));
        }
        if cfg.early_stop_patience.is_some() && !val.iter().any(|r| r.label != Label::Anomalous) {
            return Err(Error::Validation("early stopping needs normal validation images".into()));
        }
        let dims = model.input_dims();
        for r in train.iter().chain(&val) {
            r.pixels.expect_dims("train", &dims)?;
        }
        let trainable = if cfg.lambda_cls > 0.0 {
            model.params().len()
        } else {
            model.head_param_range().start
        };
        let opt = match cfg.optimizer {
            OptimizerConfig::Sgd { lr } => OptState::Sgd { lr },
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                epsilon,
            } => OptState::Adam {
                lr,
                state: AdamState::new(&model.params()[..trainable], AdamHyper { beta1, beta2, epsilon }),
            },
        };
        if !(cfg.optimizer.lr() > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(Self {
            model,
            cfg,
            train,
            val,
            trainable,
            opt,
            history: TrainHistory::default(),
            best: None,
            stale_epochs: 0,
            done: false,
        })
    }

    pub fn model(&self) -> &AutoencoderModel {
        &self.model
    }

    pub fn history(&self) -> &TrainHistory {
        &self.history
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Runs one epoch; returns `None` once training has finished.
    pub fn run_epoch(&mut self) -> Result<Option<EpochRecord>> {
        if self.done {
            return Ok(None);
        }
        let epoch = self.history.records.len();
        let epoch_seed = SeededRng::derive(self.cfg.seed, epoch as u64).next_u64();
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        SeededRng::derive(epoch_seed, 0).shuffle(&mut order);

        let lambda = self.cfg.lambda_cls;
        let mut loss_sum = 0.0f64;
        for batch in order.chunks(self.cfg.batch_size) {
            let scale = 1.0 / batch.len() as f32;
            let mut grads = self.model.zero_grads();
            for &idx in batch {
                let rec = &self.train[idx];
                let input = match &self.cfg.augment {
                    Some(policy) => {
                        augment_tensor(&rec.pixels, &mut SeededRng::derive(epoch_seed, 1 + idx as u64), policy)
                    }
                    None => rec.pixels.clone(),
                };
                let trace = self.model.forward_sample(&input)?;
                let mut sample_loss = 0.0f32;
                let mut grad_recon = Tensor::zeros(trace.reconstruction.dims());
                if rec.label != Label::Anomalous {
                    let mse = mse_loss(&trace.reconstruction, &input)?;
                    sample_loss += (1.0 - lambda) * mse.value;
                    grad_recon = mse.grad;
                    grad_recon.scale((1.0 - lambda) * scale);
                }
                let grad_latent = if lambda > 0.0 {
                    let head = self.model.forward_head(trace.latent())?;
                    let y = if rec.label == Label::Anomalous { 1.0 } else { 0.0 };
                    let bce = bce_loss(&Tensor::new(&[1], vec![head.prob])?, &Tensor::new(&[1], vec![y])?)?;
                    sample_loss += lambda * bce.value;
                    let g = self.model.backward_head(&head, bce.grad.data()[0] * lambda * scale, &mut grads)?;
                    Some(g)
                } else {
                    None
                };
                self.model
                    .backward_sample(&trace, &grad_recon, grad_latent.as_ref(), &mut grads)?;
                loss_sum += sample_loss as f64;
            }
            let n = self.trainable;
            let params = &mut self.model.params_mut()[..n];
            match &mut self.opt {
                OptState::Sgd { lr } => sgd_step(params, &grads[..n], *lr)?,
                OptState::Adam { lr, state } => adam_step(state, params, &grads[..n], *lr)?,
            }
        }

        let normals: Vec<&ImageRecord> = self.val.iter().filter(|r| r.label != Label::Anomalous).collect();
        let val_mse = if normals.is_empty() {
            None
        } else {
            Some(mean_mse(&self.model, normals.into_iter())?)
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / self.train.len() as f64,
            val_mse,
        };
        self.history.records.push(record);

        if let (Some(patience), Some(v)) = (self.cfg.early_stop_patience, val_mse) {
            let improved = match &self.best {
                None => true,
                Some((best, _)) => v <= best - MIN_IMPROVEMENT,
            };
            if improved {
                self.best = Some((v, self.model.params().to_vec()));
                self.history.best_epoch = Some(epoch);
                self.stale_epochs = 0;
            } else {
                self.stale_epochs += 1;
                if self.stale_epochs >= patience {
                    self.history.stopped_early = true;
                    self.done = true;
                }
            }
        }
        if self.history.records.len() >= self.cfg.epochs {
            self.done = true;
        }
        Ok(Some(record))
    }

    /// Final model: the best-validation parameters when early stopping is
    /// enabled, otherwise the last ones.
    pub fn finish(mut self) -> (AutoencoderModel, TrainHistory) {
        if let Some((_, params)) = self.best.take() {
            for (dst, src) in self.model.params_mut().iter_mut().zip(params) {
                *dst = src;
            }
        }
        let last_loss = self.history.last().map(|r| r.train_loss).unwrap_or(0.0);
        self.model.meta.epochs = self.history.records.len();
        self.model.meta.final_loss = last_loss as f32;
        self.model.meta.seed = self.cfg.seed;
        (self.model, self.history)
    }
}

pub fn train(
    model: AutoencoderModel,
    train_set: &[ImageRecord],
    val_set: &[ImageRecord],
    cfg: &TrainConfig,
) -> Result<(AutoencoderModel, TrainHistory)> {
    let mut t = Trainer::new(model, train_set.to_vec(), val_set.to_vec(), cfg.clone())?;
    while t.run_epoch()?.is_some() {}
    Ok(t.finish())
}

fn mean_mse<'a>(model: &AutoencoderModel, records: impl Iterator<Item = &'a ImageRecord>) -> Result<f64> {
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for r in records {
        sum += reconstruction_error(model, &r.pixels)? as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Validation("cannot evaluate an empty dataset".into()));
    }
    Ok(sum / n as f64)
}

/// Arithmetic mean of per-image reconstruction MSE, in dataset order, without
/// augmentation.
pub fn evaluate_mean_mse(model: &AutoencoderModel, dataset: &[ImageRecord]) -> Result<f64> {
    mean_mse(model, dataset.iter())
}
