use crate::error::{shape_err, Result};
use crate::tensor::{Real, Tensor};

/// Flat input index of the selected maximum for every output element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolCache {
    pub argmax: Vec<usize>,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
}

/// Non-overlapping max pooling (`window == stride`).
///
/// Ties resolve to the lowest flat input index.
pub fn maxpool2d_forward<T: Real>(
    x: &Tensor<T>,
    window: usize,
    stride: usize,
) -> Result<(Tensor<T>, PoolCache)> {
    let (n, c, h, w) = x.dims4()?;
    if window == 0 || window != stride {
        return Err(shape_err!(
            "maxpool: only non-overlapping windows supported (window {window}, stride {stride})"
        ));
    }
    if h % window != 0 || w % window != 0 {
        return Err(shape_err!(
            "maxpool: extents {h}x{w} not divisible by window {window}"
        ));
    }
    let (oh, ow) = (h / window, w / window);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let data = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = base + oy * window * w + ox * window;
                let mut best = data[best_idx];
                for i in 0..window {
                    let row = base + (oy * window + i) * w + ox * window;
                    for (j, &v) in data[row..row + window].iter().enumerate() {
                        if v > best {
                            best = v;
                            best_idx = row + j;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    let output_shape = vec![n, c, oh, ow];
    Ok((
        Tensor::new(&output_shape, out)?,
        PoolCache {
            argmax,
            input_shape: x.shape().to_vec(),
            output_shape,
        },
    ))
}

/// Routes each output gradient to its cached argmax position.
pub fn maxpool2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    cache: &PoolCache,
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    if grad_out.shape() != cache.output_shape.as_slice() {
        return Err(shape_err!(
            "maxpool backward: grad {:?} vs cached output {:?}",
            grad_out.shape(),
            cache.output_shape
        ));
    }
    if input_shape != cache.input_shape.as_slice() {
        return Err(shape_err!(
            "maxpool backward: input shape {input_shape:?} vs cached {:?}",
            cache.input_shape
        ));
    }
    let mut grad_x = Tensor::zeros(input_shape);
    let gx = grad_x.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
        gx[idx] = gx[idx] + g;
    }
    Ok(grad_x)
}
