//! Offline augmentation: brightness scaling, axis flips and right-angle rotations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, LabeledImage};
use crate::error::{Error, Result};

pub const BRIGHTNESS_FACTORS: [f64; 3] = [1.2, 1.4, 1.6];
pub const BRIGHTNESS_OFFSET: f64 = 10.0;

/// `p' = min(round(p·k + 10), 255)`
pub fn adjust_brightness(img: &LabeledImage, factor: f64) -> LabeledImage {
    img.with_pixels(
        img.pixels
            .iter()
            .map(|&p| (f64::from(p) * factor + BRIGHTNESS_OFFSET).round().min(255.0) as u8)
            .collect(),
    )
}

pub fn augment_brightness(img: &LabeledImage) -> Vec<LabeledImage> {
    BRIGHTNESS_FACTORS
        .iter()
        .map(|&k| adjust_brightness(img, k))
        .collect()
}

fn remap(img: &LabeledImage, width: usize, height: usize, src: impl Fn(usize, usize) -> usize) -> LabeledImage {
    let mut pixels = Vec::with_capacity(img.pixels.len());
    for r in 0..height {
        for c in 0..width {
            pixels.push(img.pixels[src(r, c)]);
        }
    }
    LabeledImage {
        width,
        height,
        pixels,
        label: img.label,
    }
}

/// Mirror left-right.
pub fn flip_horizontal(img: &LabeledImage) -> LabeledImage {
    let (w, h) = (img.width, img.height);
    remap(img, w, h, |r, c| r * w + (w - 1 - c))
}

/// Mirror top-bottom.
pub fn flip_vertical(img: &LabeledImage) -> LabeledImage {
    let (w, h) = (img.width, img.height);
    remap(img, w, h, |r, c| (h - 1 - r) * w + c)
}

pub fn flip_both(img: &LabeledImage) -> LabeledImage {
    let (w, h) = (img.width, img.height);
    remap(img, w, h, |r, c| (h - 1 - r) * w + (w - 1 - c))
}

/// Horizontal, vertical, and both.
pub fn augment_flips(img: &LabeledImage) -> Vec<LabeledImage> {
    vec![flip_horizontal(img), flip_vertical(img), flip_both(img)]
}

/// 90° clockwise: `(row, col) → (col, size − 1 − row)`.
pub fn rotate90(img: &LabeledImage) -> Result<LabeledImage> {
    if img.width != img.height {
        return Err(Error::Data(format!(
            "rotation needs a square image, got {}x{}",
            img.width, img.height
        )));
    }
    let n = img.width;
    Ok(remap(img, n, n, |r, c| (n - 1 - c) * n + r))
}

/// 90°, 180° and 270° clockwise.
pub fn augment_rotations(img: &LabeledImage) -> Result<Vec<LabeledImage>> {
    let r90 = rotate90(img)?;
    let r180 = rotate90(&r90)?;
    let r270 = rotate90(&r180)?;
    Ok(vec![r90, r180, r270])
}

/// Which transform families to apply; each contributes identity plus three variants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub brightness: bool,
    pub flips: bool,
    pub rotations: bool,
}

impl AugmentationPlan {
    pub const NONE: Self = Self {
        brightness: false,
        flips: false,
        rotations: false,
    };
    pub const ALL: Self = Self {
        brightness: true,
        flips: true,
        rotations: true,
    };

    pub fn factor(&self) -> usize {
        [self.brightness, self.flips, self.rotations]
            .iter()
            .map(|&on| if on { 4 } else { 1 })
            .product()
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::NONE
    }
}

impl fmt::Display for AugmentationPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [
            (self.brightness, "brightness"),
            (self.flips, "flips"),
            (self.rotations, "rotations"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        if parts.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

impl FromStr for AugmentationPlan {
    type Err = Error;

    /// `none`, `all`, or any `+`/`,`-separated subset of `brightness`, `flips`, `rotations`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "" | "none" | "original" => return Ok(Self::NONE),
            "all" | "combined" => return Ok(Self::ALL),
            _ => {}
        }
        let mut plan = Self::NONE;
        for part in s.split(['+', ',']) {
            match part.trim() {
                "brightness" => plan.brightness = true,
                "flips" | "flip" => plan.flips = true,
                "rotations" | "rotate" | "rotation" => plan.rotations = true,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown augmentation `{other}`"
                    )))
                }
            }
        }
        Ok(plan)
    }
}

/// Cartesian composition of the enabled families, brightness outermost and
/// rotation innermost; each source image expands in place, in order.
pub fn expand(dataset: &Dataset, plan: AugmentationPlan) -> Result<Dataset> {
    if plan.is_empty() {
        return Ok(dataset.clone());
    }
    let mut out = Vec::with_capacity(dataset.len() * plan.factor());
    for img in dataset.images() {
        let mut level = vec![img.clone()];
        if plan.brightness {
            level.extend(augment_brightness(img));
        }
        if plan.flips {
            level = level
                .iter()
                .flat_map(|i| std::iter::once(i.clone()).chain(augment_flips(i)))
                .collect();
        }
        if plan.rotations {
            let mut next = Vec::with_capacity(level.len() * 4);
            for i in &level {
                next.push(i.clone());
                next.extend(augment_rotations(i)?);
            }
            level = next;
        }
        out.extend(level);
    }
    Ok(Dataset::new(
        out,
        format!("{} [augmented: {plan}]", dataset.provenance()),
    ))
}
