//! Per-channel batch normalization over `N·H·W`.

use crate::error::{shape_err, Result};
use crate::ops::Mode;
use crate::tensor::{Real, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams<T: Real = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: f64,
    pub momentum: f64,
}

impl<T: Real> BatchNormParams<T> {
    /// Identity affine transform with zero mean and unit running variance.
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps: DEFAULT_EPS,
            momentum: DEFAULT_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn validate(&self, c: usize) -> Result<()> {
        let lens = [
            self.gamma.len(),
            self.beta.len(),
            self.running_mean.len(),
            self.running_var.len(),
        ];
        if lens.iter().any(|&l| l != c) {
            return Err(shape_err!(
                "batchnorm: input has {c} channels, parameters have lengths {lens:?}"
            ));
        }
        if !(self.eps > 0.0) {
            return Err(shape_err!("batchnorm: eps must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads<T: Real = f32> {
    pub grad_x: Tensor<T>,
    pub grad_gamma: Vec<T>,
    pub grad_beta: Vec<T>,
}

/// Two-pass per-channel mean and population variance, accumulated in f64.
fn batch_stats<T: Real>(x: &Tensor<T>) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, c, h, w) = x.dims4()?;
    let hw = h * w;
    let count = (n * hw) as f64;
    let data = x.data();
    let mut mean = vec![0.0f64; c];
    let mut var = vec![0.0f64; c];
    for ch in 0..c {
        let planes = || (0..n).map(move |b| &data[(b * c + ch) * hw..(b * c + ch + 1) * hw]);
        let mu = planes().flatten().map(|v| v.f64()).sum::<f64>() / count;
        let sq = planes()
            .flatten()
            .map(|v| {
                let d = v.f64() - mu;
                d * d
            })
            .sum::<f64>();
        mean[ch] = mu;
        var[ch] = sq / count;
    }
    Ok((mean, var))
}

fn normalize<T: Real>(
    x: &Tensor<T>,
    p: &BatchNormParams<T>,
    mean: &[f64],
    var: &[f64],
) -> Result<Tensor<T>> {
    let (_, c, h, w) = x.dims4()?;
    let hw = h * w;
    let mut out = x.clone();
    for (plane_idx, plane) in out.data_mut().chunks_exact_mut(hw).enumerate() {
        let ch = plane_idx % c;
        let inv = 1.0 / (var[ch] + p.eps).sqrt();
        let g = p.gamma[ch].f64();
        let b = p.beta[ch].f64();
        for v in plane.iter_mut() {
            *v = T::of(g * (v.f64() - mean[ch]) * inv + b);
        }
    }
    Ok(out)
}

/// Train mode normalizes with batch statistics and folds them into the
/// running averages; eval mode uses the running averages and mutates nothing.
pub fn batchnorm_forward<T: Real>(
    x: &Tensor<T>,
    p: &mut BatchNormParams<T>,
    mode: Mode,
) -> Result<Tensor<T>> {
    let (_, c, _, _) = x.dims4()?;
    p.validate(c)?;
    let out = match mode {
        Mode::Train => {
            let (mean, var) = batch_stats(x)?;
            let out = normalize(x, p, &mean, &var)?;
            let m = p.momentum;
            for ch in 0..c {
                p.running_mean[ch] = T::of((1.0 - m) * p.running_mean[ch].f64() + m * mean[ch]);
                p.running_var[ch] = T::of((1.0 - m) * p.running_var[ch].f64() + m * var[ch]);
            }
            out
        }
        Mode::Eval => {
            let mean: Vec<f64> = p.running_mean.iter().map(|v| v.f64()).collect();
            let var: Vec<f64> = p.running_var.iter().map(|v| v.f64().max(0.0)).collect();
            normalize(x, p, &mean, &var)?
        }
    };
    Ok(out)
}

/// Gradients of a train-mode forward, differentiating through the batch
/// mean and variance. Statistics are recomputed from `x`.
pub fn batchnorm_backward<T: Real>(
    x: &Tensor<T>,
    p: &BatchNormParams<T>,
    grad_out: &Tensor<T>,
) -> Result<BatchNormGrads<T>> {
    let (n, c, h, w) = x.dims4()?;
    p.validate(c)?;
    if grad_out.shape() != x.shape() {
        return Err(shape_err!(
            "batchnorm backward: grad {:?} vs input {:?}",
            grad_out.shape(),
            x.shape()
        ));
    }
    let hw = h * w;
    let m = (n * hw) as f64;
    let (mean, var) = batch_stats(x)?;
    let xd = x.data();
    let gd = grad_out.data();
    let mut grad_x = vec![T::zero(); x.len()];
    let mut grad_gamma = vec![T::zero(); c];
    let mut grad_beta = vec![T::zero(); c];
    for ch in 0..c {
        let inv = 1.0 / (var[ch] + p.eps).sqrt();
        let offsets = (0..n).flat_map(|b| {
            let start = (b * c + ch) * hw;
            start..start + hw
        });
        let (mut sum_g, mut sum_gx) = (0.0f64, 0.0f64);
        for i in offsets.clone() {
            let g = gd[i].f64();
            sum_g += g;
            sum_gx += g * (xd[i].f64() - mean[ch]) * inv;
        }
        grad_beta[ch] = T::of(sum_g);
        grad_gamma[ch] = T::of(sum_gx);
        let scale = p.gamma[ch].f64() * inv / m;
        for i in offsets {
            let x_hat = (xd[i].f64() - mean[ch]) * inv;
            grad_x[i] = T::of(scale * (m * gd[i].f64() - sum_g - x_hat * sum_gx));
        }
    }
    Ok(BatchNormGrads {
        grad_x: Tensor::new(x.shape(), grad_x)?,
        grad_gamma,
        grad_beta,
    })
}
