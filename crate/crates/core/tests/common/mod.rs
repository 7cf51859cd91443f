//! Brute-force reference implementations shared by the integration tests.
//!
//! Everything here is written directly from the operation definitions with
//! plain loops in f64, independent of the optimized kernels under test.

#![allow(dead_code)]

pub mod checks;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssdr_core::data::LabeledImage;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut impl Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `|a - n| / max(|a|, |n|, floor)`
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub fn max_rel_err(a: &[f64], n: &[f64]) -> f64 {
    assert_eq!(a.len(), n.len(), "length mismatch");
    a.iter().zip(n).map(|(&x, &y)| rel_err(x, y)).fold(0.0, f64::max)
}

/// Central differences of `f` at every coordinate of `x`.
pub fn numeric_grad(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct ConvShape {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub pad: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            (self.h + 2 * self.pad - self.k) / self.stride + 1,
            (self.w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }
}

/// Direct convolution: `out[n,o,y,x] = b[o] + Σ w[o,c,i,j]·x_pad[n,c,y·s+i,x·s+j]`.
pub fn conv_oracle(s: ConvShape, x: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let (oh, ow) = s.out_hw();
    let mut out = vec![0.0; s.n * s.cout * oh * ow];
    for n in 0..s.n {
        for o in 0..s.cout {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = bias[o];
                    for c in 0..s.cin {
                        for i in 0..s.k {
                            for j in 0..s.k {
                                let iy = (y * s.stride + i) as isize - s.pad as isize;
                                let ix = (xx * s.stride + j) as isize - s.pad as isize;
                                if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                    continue;
                                }
                                let xv = x[((n * s.cin + c) * s.h + iy as usize) * s.w + ix as usize];
                                acc += weight[((o * s.cin + c) * s.k + i) * s.k + j] * xv;
                            }
                        }
                    }
                    out[((n * s.cout + o) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    out
}

/// 2×2 stride-2 max pooling; returns values and the flat argmax of each window.
pub fn maxpool_oracle(shape: [usize; 4], x: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let [n, c, h, w] = shape;
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut idx = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        for y in 0..oh {
            for xx in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut at = usize::MAX;
                for i in 0..2 {
                    for j in 0..2 {
                        let flat = plane * h * w + (2 * y + i) * w + 2 * xx + j;
                        // strict comparison in scan order keeps the lowest index on ties
                        if x[flat] > best {
                            best = x[flat];
                            at = flat;
                        }
                    }
                }
                out.push(best);
                idx.push(at);
            }
        }
    }
    (out, idx)
}

/// Train-mode batch normalization with population variance: returns the
/// output, the per-channel means and the per-channel variances.
pub fn batchnorm_oracle(
    shape: [usize; 4],
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let [n, c, h, w] = shape;
    let count = (n * h * w) as f64;
    let at = |b: usize, ch: usize, i: usize| (b * c + ch) * h * w + i;
    let mut means = vec![0.0; c];
    let mut vars = vec![0.0; c];
    for ch in 0..c {
        let mut sum = 0.0;
        for b in 0..n {
            for i in 0..h * w {
                sum += x[at(b, ch, i)];
            }
        }
        let mean = sum / count;
        let mut sq = 0.0;
        for b in 0..n {
            for i in 0..h * w {
                sq += (x[at(b, ch, i)] - mean).powi(2);
            }
        }
        means[ch] = mean;
        vars[ch] = sq / count;
    }
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for ch in 0..c {
            for i in 0..h * w {
                let k = at(b, ch, i);
                out[k] = gamma[ch] * (x[k] - means[ch]) / (vars[ch] + eps).sqrt() + beta[ch];
            }
        }
    }
    (out, means, vars)
}

pub fn gap_oracle(shape: [usize; 4], x: &[f64]) -> Vec<f64> {
    let [n, c, h, w] = shape;
    (0..n * c)
        .map(|plane| x[plane * h * w..(plane + 1) * h * w].iter().sum::<f64>() / (h * w) as f64)
        .collect()
}

/// Mean cross-entropy, probabilities and `(p - onehot)/N`, computed
/// without max-shifting (inputs are kept in a safe range).
pub fn softmax_ce_oracle(k: usize, logits: &[f64], labels: &[usize]) -> (f64, Vec<f64>, Vec<f64>) {
    let n = labels.len();
    let mut loss = 0.0;
    let mut probs = Vec::with_capacity(n * k);
    let mut grad = Vec::with_capacity(n * k);
    for (row, &label) in logits.chunks(k).zip(labels) {
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        for (j, v) in row.iter().enumerate() {
            let p = v.exp() / z;
            probs.push(p);
            grad.push((p - if j == label { 1.0 } else { 0.0 }) / n as f64);
        }
        loss -= (row[label].exp() / z).ln();
    }
    (loss / n as f64, probs, grad)
}

/// k-NN on raw pixels with Euclidean distance and
/// majority vote (ties go to the nearest neighbor's class).
pub fn knn_accuracy(train: &[LabeledImage], test: &[LabeledImage], k: usize) -> f64 {
    let mut correct = 0;
    for q in test {
        let mut dists: Vec<(u64, usize)> = train
            .iter()
            .map(|t| {
                let d: u64 = q
                    .pixels
                    .iter()
                    .zip(&t.pixels)
                    .map(|(&a, &b)| {
                        let d = a as i64 - b as i64;
                        (d * d) as u64
                    })
                    .sum();
                (d, t.label)
            })
            .collect();
        dists.sort();
        let mut votes = [0usize; 6];
        for &(_, l) in &dists[..k] {
            votes[l] += 1;
        }
        let top = *votes.iter().max().unwrap();
        let pred = dists[..k].iter().map(|&(_, l)| l).find(|&l| votes[l] == top).unwrap();
        if pred == q.label {
            correct += 1;
        }
    }
    correct as f64 / test.len() as f64
}

/// A grayscale image with a roughly 1/f spectrum: octaves of bilinearly
/// interpolated lattice noise with amplitude halving per octave, rescaled
/// to a random mean and contrast well inside the 8-bit range.
pub fn natural_image(rng: &mut impl Rng, size: usize) -> LabeledImage {
    let mut field = vec![0.0f64; size * size];
    let mut amp = 1.0;
    let mut cells = 2usize;
    while cells <= size / 2 {
        let lattice = uniform_vec(rng, (cells + 1) * (cells + 1), -1.0, 1.0);
        for y in 0..size {
            let fy = y as f64 * cells as f64 / size as f64;
            let (y0, ty) = (fy.floor() as usize, fy.fract());
            for x in 0..size {
                let fx = x as f64 * cells as f64 / size as f64;
                let (x0, tx) = (fx.floor() as usize, fx.fract());
                let l = |r: usize, c: usize| lattice[r * (cells + 1) + c];
                let top = l(y0, x0) * (1.0 - tx) + l(y0, x0 + 1) * tx;
                let bottom = l(y0 + 1, x0) * (1.0 - tx) + l(y0 + 1, x0 + 1) * tx;
                field[y * size + x] += amp * (top * (1.0 - ty) + bottom * ty);
            }
        }
        amp *= 0.5;
        cells *= 2;
    }
    let mean = field.iter().sum::<f64>() / field.len() as f64;
    let sd = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / field.len() as f64).sqrt();
    let target_mean = rng.random_range(90.0..170.0);
    let target_sd = rng.random_range(15.0..30.0);
    let pixels = field
        .iter()
        .map(|v| ((v - mean) / sd * target_sd + target_mean).round().clamp(0.0, 255.0) as u8)
        .collect();
    LabeledImage::new(size, size, pixels, 0).unwrap()
}

/// Clean-image variance and the variance of what was actually stored
/// minus the clean image, after rounding and clamping.
pub fn signal_and_added_variance(clean: &LabeledImage, noisy: &LabeledImage) -> (f64, f64) {
    let n = clean.pixels.len() as f64;
    let mean = clean.pixels.iter().map(|&p| p as f64).sum::<f64>() / n;
    let signal = clean.pixels.iter().map(|&p| (p as f64 - mean).powi(2)).sum::<f64>() / n;
    let diff: Vec<f64> = noisy.pixels.iter().zip(&clean.pixels).map(|(&a, &b)| a as f64 - b as f64).collect();
    let dm = diff.iter().sum::<f64>() / n;
    let noise = diff.iter().map(|d| (d - dm).powi(2)).sum::<f64>() / n;
    (signal, noise)
}

/// Variance of unit-step rounding error (Sheppard's correction).
pub const QUANTIZATION_VAR: f64 = 1.0 / 12.0;
