//! Analytic-versus-numeric gradient comparison.
//!
//! Runs in f64 so central differences are not swamped by single-precision
//! rounding. The forward pass is in train mode with the dropout stream reset
//! for every evaluation, so masks stay fixed across perturbations.
//!
//! A central difference is only meaningful when both probes sit on the same
//! linear piece. A probe whose ReLU sign pattern or pool argmax differs from
//! the unperturbed pass straddles a kink; it is retried with the step shrunk
//! by 10× and 100×, and skipped (then replaced by another sampled parameter)
//! if every step straddles one. Both events are counted in the report.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::{backward, forward, LayerRecord, NetworkSpec, ParamStore, Tape};
use crate::ops::{softmax_cross_entropy, Mode};
use crate::seeding;
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-3;
pub const DEFAULT_SAMPLES: usize = 200;
/// Step reductions tried when a probe straddles a kink.
const STEP_SHRINK: [f64; 3] = [1.0, 0.1, 0.01];
/// Probes attempted per layer, as a multiple of the requested samples.
const MAX_ATTEMPTS_FACTOR: usize = 10;
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCheck {
    pub layer: String,
    pub checked: usize,
    /// Parameters checked with a reduced step after a kink at the full step.
    pub reduced_step: usize,
    /// Parameters discarded because every step straddled a kink.
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub layers: Vec<LayerCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.layers.iter().map(|l| l.max_rel_error).fold(0.0, f64::max)
    }
}

/// `|a − n| / max(|a|, |n|, 1e-6)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Which linear piece of the network a pass landed on.
#[derive(PartialEq)]
struct Pattern {
    relu: Vec<bool>,
    pool: Vec<usize>,
}

fn pattern(tape: &Tape<f64>) -> Pattern {
    let mut p = Pattern {
        relu: Vec::new(),
        pool: Vec::new(),
    };
    for r in &tape.records {
        match r {
            LayerRecord::Relu { input } => p.relu.extend(input.data().iter().map(|&v| v > 0.0)),
            LayerRecord::MaxPool { cache } => p.pool.extend_from_slice(&cache.argmax),
            _ => {}
        }
    }
    p
}

fn loss_at(
    spec: &NetworkSpec,
    params: &ParamStore<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    seed: u64,
) -> Result<(f64, Pattern)> {
    let mut rng = seeding::stream(seed, seeding::GRAD_CHECK);
    // running statistics are irrelevant to the train-mode loss
    let (logits, tape) = forward(spec, &mut params.clone(), x, Mode::Train, &mut rng)?;
    Ok((softmax_cross_entropy(&logits, labels)?.loss, pattern(&tape)))
}

/// Compares backward against central differences on up to
/// `samples_per_layer` randomly chosen trainable scalars of every layer.
pub fn gradient_check(
    spec: &NetworkSpec,
    params: &ParamStore,
    input: &Tensor,
    labels: &[usize],
    eps: f64,
    samples_per_layer: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut p64: ParamStore<f64> = params.cast();
    p64.zero_grads();
    let x = input.cast::<f64>();

    let mut rng = seeding::stream(seed, seeding::GRAD_CHECK);
    let (logits, tape) = forward(spec, &mut p64.clone(), &x, Mode::Train, &mut rng)?;
    let base = pattern(&tape);
    let ce = softmax_cross_entropy(&logits, labels)?;
    backward(spec, &mut p64, &tape, &ce.grad_logits)?;
    let analytic = p64.clone();

    let mut pick = seeding::stream(seed, seeding::SAMPLE);
    let mut layers = Vec::new();
    for layer in &spec.layers {
        let mut slots: Vec<(String, usize)> = layer
            .params()
            .into_iter()
            .filter(|(name, _, _)| analytic.get(name).map(|p| p.trainable).unwrap_or(false))
            .flat_map(|(name, shape, _)| {
                let len: usize = shape.iter().product();
                (0..len).map(move |i| (name.clone(), i))
            })
            .collect();
        if slots.is_empty() {
            continue;
        }
        slots.shuffle(&mut pick);
        let (mut checked, mut reduced, mut skipped, mut worst) = (0, 0, 0, 0.0f64);
        for (name, i) in slots.iter().take(samples_per_layer * MAX_ATTEMPTS_FACTOR) {
            if checked == samples_per_layer {
                break;
            }
            let a = analytic.get(name)?.grad.data()[*i];
            let original = p64.get(name)?.value.data()[*i];
            let mut numeric = None;
            for (k, shrink) in STEP_SHRINK.iter().enumerate() {
                let h = eps * shrink;
                p64.get_mut(name)?.value.data_mut()[*i] = original + h;
                let (plus, pp) = loss_at(spec, &p64, &x, labels, seed)?;
                p64.get_mut(name)?.value.data_mut()[*i] = original - h;
                let (minus, pm) = loss_at(spec, &p64, &x, labels, seed)?;
                p64.get_mut(name)?.value.data_mut()[*i] = original;
                if pp == base && pm == base {
                    numeric = Some((plus - minus) / (2.0 * h));
                    reduced += usize::from(k > 0);
                    break;
                }
            }
            match numeric {
                Some(n) => {
                    worst = worst.max(relative_error(a, n));
                    checked += 1;
                }
                None => skipped += 1,
            }
        }
        layers.push(LayerCheck {
            layer: layer.name.clone(),
            checked,
            reduced_step: reduced,
            skipped_kinks: skipped,
            max_rel_error: worst,
        });
    }
    Ok(GradCheckReport { layers })
}
