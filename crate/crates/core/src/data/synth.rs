//! Procedural stand-in for the defect dataset.
//!
//! Six 200×200 texture classes, each on its own base gray level:
//!
//! | label | texture                                   | base |
//! |-------|-------------------------------------------|------|
//! | 0     | fine sinusoidal stripes, period 8         | 40   |
//! | 1     | coarse sinusoidal stripes, period 24      | 75   |
//! | 2     | a few large bright Gaussian blobs         | 110  |
//! | 3     | many small dark pits                      | 145  |
//! | 4     | checkerboard, 20 px cells                 | 180  |
//! | 5     | linear ramp plus dark speckle             | 215  |
//!
//! Stripe orientation is drawn from {0°, 45°, 90°, 135°}. Phases, blob and
//! pit positions, checker offsets and ramp directions are random per image.
//! Every image also gets Gaussian grain (σ = 5). Image `i` of class `c`
//! draws from its own substream, so the dataset for a seed is independent
//! of `n_per_class` ordering effects: the first `n` images of a class are
//! the same for any larger `n`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::dataset::{Dataset, LabeledImage, IMAGE_SIZE, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::seeding;

const BASE_LEVELS: [f64; NUM_CLASSES] = [40.0, 75.0, 110.0, 145.0, 180.0, 215.0];
const GRAIN_STD: f64 = 5.0;

fn stripes<R: Rng>(canvas: &mut [f64], period: f64, amplitude: f64, rng: &mut R) {
    let theta = f64::from(rng.random_range(0..4u8)) * PI / 4.0;
    let phase = rng.random_range(0.0..2.0 * PI);
    let (s, c) = theta.sin_cos();
    for (i, v) in canvas.iter_mut().enumerate() {
        let (y, x) = ((i / IMAGE_SIZE) as f64, (i % IMAGE_SIZE) as f64);
        *v += amplitude * (2.0 * PI * (x * c + y * s) / period + phase).sin();
    }
}

fn blobs<R: Rng>(canvas: &mut [f64], count: usize, sigma: f64, amplitude: f64, rng: &mut R) {
    let reach = (3.0 * sigma).ceil() as isize;
    let n = IMAGE_SIZE as isize;
    for _ in 0..count {
        let cy = rng.random_range(0..IMAGE_SIZE as i64) as isize;
        let cx = rng.random_range(0..IMAGE_SIZE as i64) as isize;
        for y in (cy - reach).max(0)..(cy + reach + 1).min(n) {
            for x in (cx - reach).max(0)..(cx + reach + 1).min(n) {
                let d2 = ((y - cy).pow(2) + (x - cx).pow(2)) as f64;
                canvas[(y * n + x) as usize] += amplitude * (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }
}

fn checker<R: Rng>(canvas: &mut [f64], cell: usize, amplitude: f64, rng: &mut R) {
    let oy = rng.random_range(0..2 * cell);
    let ox = rng.random_range(0..2 * cell);
    for (i, v) in canvas.iter_mut().enumerate() {
        let (y, x) = (i / IMAGE_SIZE + oy, i % IMAGE_SIZE + ox);
        *v += if (y / cell + x / cell) % 2 == 0 { amplitude } else { -amplitude };
    }
}

fn ramp_speckle<R: Rng>(canvas: &mut [f64], amplitude: f64, rng: &mut R) {
    let (s, c) = rng.random_range(0.0..2.0 * PI).sin_cos();
    let half = (IMAGE_SIZE - 1) as f64 / 2.0;
    for (i, v) in canvas.iter_mut().enumerate() {
        let (y, x) = ((i / IMAGE_SIZE) as f64 - half, (i % IMAGE_SIZE) as f64 - half);
        *v += amplitude * (x * c + y * s) / half;
        if rng.random_bool(0.03) {
            *v -= 70.0;
        }
    }
}

fn render(label: usize, rng: &mut seeding::Rng) -> LabeledImage {
    let mut canvas = vec![BASE_LEVELS[label]; IMAGE_SIZE * IMAGE_SIZE];
    match label {
        0 => stripes(&mut canvas, 8.0, 30.0, rng),
        1 => stripes(&mut canvas, 24.0, 30.0, rng),
        2 => blobs(&mut canvas, 12, 10.0, 60.0, rng),
        3 => blobs(&mut canvas, 150, 2.5, -60.0, rng),
        4 => checker(&mut canvas, 20, 25.0, rng),
        _ => ramp_speckle(&mut canvas, 20.0, rng),
    }
    let grain = Normal::new(0.0, GRAIN_STD).expect("positive std");
    let pixels = canvas
        .iter()
        .map(|&v| (v + grain.sample(rng)).round().clamp(0.0, 255.0) as u8)
        .collect();
    LabeledImage::new(IMAGE_SIZE, IMAGE_SIZE, pixels, label).expect("fixed size")
}

/// `n_per_class` images per class, grouped by class in label order.
pub fn synth_dataset(n_per_class: usize, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be at least 1".into()));
    }
    let mut images = Vec::with_capacity(n_per_class * NUM_CLASSES);
    for label in 0..NUM_CLASSES {
        for i in 0..n_per_class {
            let index = (label * 1_000_003 + i) as u64;
            images.push(render(label, &mut seeding::substream(seed, seeding::SYNTH, index)));
        }
    }
    Ok(Dataset::new(images, "synthetic"))
}
