//! Mini-batch training loop.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{backward, forward, NetworkSpec, ParamStore};
use crate::ops::{softmax_cross_entropy, Mode};
use crate::seeding;
use crate::training::adam::{adam_step, AdamConfig, AdamState};
use crate::training::histogram::{GradHistogram, DEFAULT_BINS};
use crate::training::init::InitMethod;
use crate::training::samples::{gather, Samples};
use crate::training::schedule::LrSchedule;

pub const DEFAULT_BATCH_SIZE: usize = 3;
pub const DEFAULT_MAX_UPDATES: usize = 6000;
pub const DEFAULT_HIST_EVERY: usize = 50;

/// Layers whose gradients are histogrammed: the extractor's first and last
/// convolutions and the classifier's first and last.
pub const HIST_LAYERS: [&str; 4] = ["conv1_1", "conv3_3", "cls.conv1", "cls.conv3"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_updates: usize,
    pub seed: u64,
    /// Extractor frozen (features precomputed) versus trained from scratch.
    pub transfer: bool,
    pub init: InitMethod,
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    pub record_grad_hist: bool,
    pub hist_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            max_updates: DEFAULT_MAX_UPDATES,
            seed: 0,
            transfer: true,
            init: InitMethod::Gaussian,
            schedule: LrSchedule::default(),
            adam: AdamConfig::default(),
            record_grad_hist: false,
            hist_every: DEFAULT_HIST_EVERY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    /// Zero-based update index; the learning rate is `lr_at(update)`.
    pub update: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub updates: Vec<UpdateRecord>,
    pub histograms: Vec<GradHistogram>,
}

impl History {
    /// Mean loss over the updates in `range`.
    pub fn mean_loss(&self, range: std::ops::Range<usize>) -> f64 {
        let slice = &self.updates[range.start.min(self.updates.len())..range.end.min(self.updates.len())];
        slice.iter().map(|u| u.loss).sum::<f64>() / slice.len().max(1) as f64
    }

    /// Mean loss over the final `window` updates.
    pub fn final_loss(&self, window: usize) -> f64 {
        let n = self.updates.len();
        self.mean_loss(n.saturating_sub(window)..n)
    }

    /// CSV with columns `update,loss,lr`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["update", "loss", "lr"])?;
        for u in &self.updates {
            w.write_record([u.update.to_string(), u.loss.to_string(), u.lr.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// CSV with columns `update,layer,bin_lo,bin_hi,count`.
    pub fn write_histograms_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["update", "layer", "bin_lo", "bin_hi", "count"])?;
        for h in &self.histograms {
            for (i, count) in h.counts.iter().enumerate() {
                w.write_record([
                    h.update.to_string(),
                    h.layer.clone(),
                    h.edges[i].to_string(),
                    h.edges[i + 1].to_string(),
                    count.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn capture_histograms(params: &ParamStore, update: usize, out: &mut Vec<GradHistogram>) {
    for layer in HIST_LAYERS {
        let mut grads = Vec::new();
        for suffix in ["weight", "bias"] {
            if let Ok(p) = params.get(&format!("{layer}.{suffix}")) {
                if p.trainable {
                    grads.extend_from_slice(p.grad.data());
                }
            }
        }
        if !grads.is_empty() {
            out.push(GradHistogram::from_gradients(update, layer, &grads, DEFAULT_BINS));
        }
    }
}

/// Trains the trainable parameters of `params` on per-sample inputs.
///
/// `inputs` hold one `[C,H,W]` tensor per sample: cached feature maps with
/// the classifier spec, or preprocessed images with the full network.
/// Each epoch visits a fresh seeded permutation in batches of
/// `cfg.batch_size`; a trailing short batch is dropped.
pub fn train<S: Samples + ?Sized>(
    spec: &NetworkSpec,
    mut params: ParamStore,
    inputs: &S,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(ParamStore, History)> {
    if inputs.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    if inputs.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if cfg.batch_size == 0 || cfg.batch_size > inputs.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {} incompatible with {} samples",
            cfg.batch_size,
            inputs.len()
        )));
    }
    let mut shuffle_rng = seeding::stream(cfg.seed, seeding::SHUFFLE);
    let mut dropout_rng = seeding::stream(cfg.seed, seeding::DROPOUT);
    let mut adam = AdamState::new(cfg.adam);
    let mut history = History::default();
    params.zero_grads();

    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let batches_per_epoch = inputs.len() / cfg.batch_size;
    let mut cursor = batches_per_epoch;
    for update in 0..cfg.max_updates {
        if cursor == batches_per_epoch {
            order.shuffle(&mut shuffle_rng);
            cursor = 0;
        }
        let idx = &order[cursor * cfg.batch_size..(cursor + 1) * cfg.batch_size];
        cursor += 1;

        let x = gather(inputs, idx)?;
        let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();

        let (logits, tape) = forward(spec, &mut params, &x, Mode::Train, &mut dropout_rng)?;
        let ce = softmax_cross_entropy(&logits, &y)?;
        if !ce.loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                update,
                loss: ce.loss,
            });
        }
        backward(spec, &mut params, &tape, &ce.grad_logits)?;
        if cfg.record_grad_hist && update % cfg.hist_every.max(1) == 0 {
            capture_histograms(&params, update, &mut history.histograms);
        }
        let lr = cfg.schedule.lr_at(update);
        adam_step(&mut params, &mut adam, lr);
        history.updates.push(UpdateRecord {
            update,
            loss: ce.loss,
            lr,
        });
        if (update + 1) % 500 == 0 {
            log::debug!("update {}: loss {:.4} lr {lr:.5}", update + 1, history.final_loss(100));
        }
    }
    Ok((params, history))
}
