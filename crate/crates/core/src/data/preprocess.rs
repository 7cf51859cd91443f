//! Conversion of a stored image into extractor input.

use crate::data::dataset::LabeledImage;
use crate::network::INPUT_SIZE;
use crate::tensor::Tensor;

/// Bilinear resampling with half-pixel centres: source coordinate
/// `s = (d + 0.5) · src / dst − 0.5`, clamped to the source extent.
pub fn resize_bilinear(src: &[f32], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f32> {
    let taps = |dst: usize, src_len: usize| -> Vec<(usize, usize, f32)> {
        let scale = src_len as f64 / dst as f64;
        (0..dst)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(src_len - 1);
                (lo, hi, (s - lo as f64) as f32)
            })
            .collect()
    };
    let xs = taps(dw, sw);
    let ys = taps(dh, sh);
    let mut out = Vec::with_capacity(dw * dh);
    for &(y0, y1, fy) in &ys {
        let r0 = &src[y0 * sw..(y0 + 1) * sw];
        let r1 = &src[y1 * sw..(y1 + 1) * sw];
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
            out.push(top + (bottom - top) * fy);
        }
    }
    out
}

/// Float conversion, mean removal, resize to 224×224, then replication into
/// three identical channels. Output shape `[3, 224, 224]`.
pub fn preprocess(img: &LabeledImage) -> Tensor {
    let mean = img.mean() as f32;
    let centred: Vec<f32> = img.pixels.iter().map(|&p| f32::from(p) - mean).collect();
    let plane = resize_bilinear(&centred, img.width, img.height, INPUT_SIZE, INPUT_SIZE);
    let mut data = Vec::with_capacity(3 * plane.len());
    for _ in 0..3 {
        data.extend_from_slice(&plane);
    }
    Tensor::new(&[3, INPUT_SIZE, INPUT_SIZE], data).expect("fixed output shape")
}
