//! Grayscale dumps of extractor activations after a chosen pooling layer.

use std::path::{Path, PathBuf};

use image::GrayImage;

use crate::error::{Error, Result};
use crate::network::exec::infer;
use crate::network::params::ParamStore;
use crate::network::spec::NetworkSpec;
use crate::tensor::Tensor;

/// Min-max maps a plane to 0..=255; a constant plane maps to all zeros.
pub fn normalize_plane(plane: &[f32]) -> Vec<u8> {
    let (lo, hi) = plane
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        return vec![0; plane.len()];
    }
    plane
        .iter()
        .map(|&v| ((v - lo) / range * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Writes `<pool>_<channel>.png` for every channel after pool `after_pool`.
///
/// `image` is a single preprocessed input, `[3,H,W]` or `[1,3,H,W]`.
pub fn dump_feature_maps(
    extractor: &NetworkSpec,
    params: &ParamStore,
    image: &Tensor,
    after_pool: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let prefix = extractor.truncate_after_pool(after_pool)?;
    let input = match image.rank() {
        3 => image.clone().reshape(&[1, image.shape()[0], image.shape()[1], image.shape()[2]])?,
        _ => image.clone(),
    };
    let maps = infer(&prefix, params, &input)?;
    let (_, c, h, w) = maps.dims4()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::with_capacity(c);
    for (ch, plane) in maps.data().chunks_exact(h * w).take(c).enumerate() {
        let img = GrayImage::from_raw(w as u32, h as u32, normalize_plane(plane))
            .expect("plane length matches extent");
        let path = out_dir.join(format!("{after_pool}_{ch}.png"));
        img.save(&path).map_err(|e| Error::Image {
            path: path.clone(),
            message: e.to_string(),
        })?;
        written.push(path);
    }
    Ok(written)
}
