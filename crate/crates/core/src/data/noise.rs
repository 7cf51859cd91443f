//! Additive Gaussian noise at a target signal-to-noise ratio.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, LabeledImage};
use crate::error::{Error, Result};
use crate::seeding;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub apply_to_train: bool,
    pub apply_to_test: bool,
}

impl NoiseSpec {
    /// Independent noise on both train and test images.
    pub fn both(snr_db: f64) -> Self {
        Self {
            snr_db,
            apply_to_train: true,
            apply_to_test: true,
        }
    }

    pub fn train_only(snr_db: f64) -> Self {
        Self {
            snr_db,
            apply_to_train: true,
            apply_to_test: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisyImage {
    pub image: LabeledImage,
    /// Population variance of the clean pixels.
    pub signal_var: f64,
    /// `signal_var / 10^(snr/10)`
    pub target_noise_var: f64,
    /// Sample variance of the drawn noise, before rounding and clamping.
    pub drawn_noise_var: f64,
    /// Zero-variance input: returned unchanged.
    pub passthrough: bool,
}

/// Noise variance for a signal variance at `snr_db`.
pub fn noise_variance(signal_var: f64, snr_db: f64) -> f64 {
    signal_var / 10f64.powf(snr_db / 10.0)
}

/// `p' = clamp(round(p + ε), 0, 255)` with `ε ~ N(0, σ²_signal / 10^(snr/10))`.
pub fn add_gaussian_noise<R: Rng + ?Sized>(img: &LabeledImage, snr_db: f64, rng: &mut R) -> Result<NoisyImage> {
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!("SNR must be finite, got {snr_db}")));
    }
    let signal_var = img.variance();
    if signal_var == 0.0 {
        log::warn!("constant image: noise injection skipped");
        return Ok(NoisyImage {
            image: img.clone(),
            signal_var,
            target_noise_var: 0.0,
            drawn_noise_var: 0.0,
            passthrough: true,
        });
    }
    let target = noise_variance(signal_var, snr_db);
    let normal = Normal::new(0.0, target.sqrt()).expect("finite positive std");
    let eps: Vec<f64> = (0..img.pixels.len()).map(|_| normal.sample(rng)).collect();
    let mean = eps.iter().sum::<f64>() / eps.len() as f64;
    let drawn = eps.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / eps.len() as f64;
    let pixels = img
        .pixels
        .iter()
        .zip(&eps)
        .map(|(&p, e)| (f64::from(p) + e).round().clamp(0.0, 255.0) as u8)
        .collect();
    Ok(NoisyImage {
        image: img.with_pixels(pixels),
        signal_var,
        target_noise_var: target,
        drawn_noise_var: drawn,
        passthrough: false,
    })
}

/// Noise for every image, each from its own `(seed, purpose, index)` stream.
pub fn add_noise_to_dataset(dataset: &Dataset, snr_db: f64, seed: u64, purpose: u64) -> Result<Dataset> {
    let images = dataset
        .images()
        .iter()
        .enumerate()
        .map(|(i, img)| {
            add_gaussian_noise(img, snr_db, &mut seeding::substream(seed, purpose, i as u64)).map(|n| n.image)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(
        images,
        format!("{} [noise {snr_db} dB]", dataset.provenance()),
    ))
}
