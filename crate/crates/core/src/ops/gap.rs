use crate::error::{shape_err, Result};
use crate::tensor::{Real, Tensor};

/// Per-channel spatial mean: `[N,C,H,W] -> [N,C]`.
pub fn global_avg_pool_forward<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let hw = h * w;
    let out = x
        .data()
        .chunks_exact(hw)
        .map(|plane| T::of(plane.iter().map(|v| v.f64()).sum::<f64>() / hw as f64))
        .collect();
    Tensor::new(&[n, c], out)
}

/// Spreads `grad_out[n,c] / (H·W)` uniformly over each plane.
pub fn global_avg_pool_backward<T: Real>(grad_out: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let (n, c) = grad_out.dims2()?;
    if h == 0 || w == 0 {
        return Err(shape_err!("global pool backward: zero spatial extent"));
    }
    let hw = h * w;
    let scale = T::of(1.0 / hw as f64);
    let mut data = Vec::with_capacity(n * c * hw);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g * scale, hw));
    }
    Tensor::new(&[n, c, h, w], data)
}
