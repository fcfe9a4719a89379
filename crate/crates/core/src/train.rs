//! Mini-batch MSE training with Adam and global-norm gradient clipping.
//!
//! Runs are a pure function of (samples, configs, seed): parameter init and
//! the per-epoch shuffle both draw from ChaCha8 streams seeded by `seed`, and
//! gradients are accumulated in a fixed order.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Tensor};
use crate::context::{ContextError, PromptContext};
use crate::features::{NormalizationStats, Window};
use crate::model::{forward_graph, ModelConfig, ModelError, ModelParams, Sample, TyphoFormer};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training windows")]
    NoTrainingData,
    #[error("no windows to evaluate")]
    NoData,
    #[error("loss became non-finite in epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("sample {index} has no targets")]
    MissingTargets { index: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Context(#[from] ContextError),
}

impl From<AutodiffError> for TrainError {
    fn from(e: AutodiffError) -> Self {
        TrainError::Model(e.into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub grad_clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            betas: (0.9, 0.999),
            adam_eps: 1e-8,
            batch_size: 32,
            epochs: 100,
            seed: 42,
            grad_clip_norm: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let (b1, b2) = self.betas;
        if !(self.lr > 0.0) {
            return Err(TrainError::Config("lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(TrainError::Config("betas must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.adam_eps > 0.0) || !(self.grad_clip_norm > 0.0) {
            return Err(TrainError::Config(
                "adam_eps and grad_clip_norm must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean per-window training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Cumulative seconds at the end of each epoch.
    pub epoch_seconds: Vec<f64>,
    pub wall_seconds: f64,
    pub checkpoint_path: Option<PathBuf>,
}

impl TrainReport {
    /// `epoch,loss,seconds` with a header row; epochs count from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,seconds\n");
        for (i, (l, s)) in self.epoch_losses.iter().zip(&self.epoch_seconds).enumerate() {
            out.push_str(&format!("{},{l},{s:.3}\n", i + 1));
        }
        out
    }
}

/// Mean squared error over all `2K` entries of normalized positions.
pub fn loss(pred: &Tensor, target: &Tensor) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let p = tape.leaf(pred.clone());
    let t = tape.leaf(target.clone());
    let l = tape.mse(p, t)?;
    Ok(tape.value(l).item())
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) -> f64 {
    let norm = grads.values().map(Tensor::norm_sq).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.lr,
            beta1: cfg.betas.0,
            beta2: cfg.betas.1,
            eps: cfg.adam_eps,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn update(&mut self, params: &mut ModelParams, grads: &BTreeMap<String, Tensor>) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (name, theta) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let m = self
                .m
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; g.len()]);
            let v = self
                .v
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; g.len()]);
            for (i, (th, &gi)) in theta.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *th -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Mean loss and parameter gradients of a batch.
pub fn batch_gradients(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[&Sample],
) -> Result<(f64, BTreeMap<String, Tensor>), TrainError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let mut losses = Vec::with_capacity(batch.len());
    for (i, s) in batch.iter().enumerate() {
        let target = s
            .target_norm
            .as_ref()
            .ok_or(TrainError::MissingTargets { index: i })?;
        let f = forward_graph(&mut tape, &bound, cfg, s)?;
        let t = tape.leaf(target.clone());
        losses.push(tape.mse(f.prediction, t)?);
    }
    let stacked = tape.concat_rows(&losses)?;
    let total = tape.mean(stacked, 0)?;
    let value = tape.value(total).item();
    let grads = tape.backward(total)?;
    let out = bound
        .iter()
        .map(|(name, var)| (name.to_string(), grads.get_or_zero(var)))
        .collect();
    Ok((value, out))
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub seconds: f64,
}

/// Trains from a fresh initialization seeded by `train_cfg.seed`.
pub fn train_samples(
    samples: &[Sample],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &ModelParams),
) -> Result<(ModelParams, TrainReport), TrainError> {
    train_cfg.validate()?;
    if samples.is_empty() {
        return Err(TrainError::NoTrainingData);
    }
    let mut params = ModelParams::init(model_cfg, train_cfg.seed)?;
    let mut adam = Adam::new(train_cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut report = TrainReport::default();
    let start = Instant::now();

    for epoch in 1..=train_cfg.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(train_cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (l, mut grads) = batch_gradients(&params, model_cfg, &batch)?;
            if !l.is_finite() {
                return Err(TrainError::DivergedLoss { epoch });
            }
            clip_global_norm(&mut grads, train_cfg.grad_clip_norm);
            adam.update(&mut params, &grads);
            weighted += l * chunk.len() as f64;
        }
        let loss = weighted / samples.len() as f64;
        let seconds = start.elapsed().as_secs_f64();
        report.epoch_losses.push(loss);
        report.epoch_seconds.push(seconds);
        log::debug!("epoch {epoch}: loss {loss:.6e}");
        on_epoch(&EpochStats { epoch, loss, seconds }, &params);
    }
    if params.iter().any(|(_, t)| !t.is_finite()) {
        return Err(TrainError::DivergedLoss {
            epoch: train_cfg.epochs,
        });
    }
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok((params, report))
}

/// Prepares samples for `windows` and trains.
pub fn train(
    windows: &[Window],
    context: &PromptContext,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    stats: &NormalizationStats,
) -> Result<(ModelParams, TrainReport), TrainError> {
    let samples = prepare_samples(windows, context, model_cfg, stats)?;
    train_samples(&samples, model_cfg, train_cfg, |_, _| {})
}

pub fn prepare_samples(
    windows: &[Window],
    context: &PromptContext,
    model_cfg: &ModelConfig,
    stats: &NormalizationStats,
) -> Result<Vec<Sample>, TrainError> {
    windows
        .iter()
        .map(|w| Ok(context.sample(w, model_cfg.prompt_mode, stats)?))
        .collect()
}

/// Mean per-window loss, no backward pass.
pub fn evaluate_loss(samples: &[Sample], model: &TyphoFormer) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::NoData);
    }
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let target = s
            .target_norm
            .as_ref()
            .ok_or(TrainError::MissingTargets { index: i })?;
        total += loss(&model.predict_normalized(s)?, target)?;
    }
    Ok(total / samples.len() as f64)
}
