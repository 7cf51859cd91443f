//! 2-D convolution lowered to GEMM through patch-matrix expansion.

use crate::error::{shape_err, Result};
use crate::tensor::{matmul, Real, Tensor};

/// Borrowed view of one convolution layer's parameters.
#[derive(Clone, Copy, Debug)]
pub struct ConvParams<'a, T: Real = f32> {
    /// `[C_out, C_in, K_h, K_w]`
    pub weight: &'a Tensor<T>,
    /// `[C_out]`
    pub bias: &'a Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T: Real = f32> {
    pub grad_x: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
}

#[derive(Clone, Copy, Debug)]
struct Dims {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Dims {
    fn patch_len(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn out_len(&self) -> usize {
        self.oh * self.ow
    }

    /// 1×1 kernels without padding or stride read the input plane directly.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

fn dims<T: Real>(x: &Tensor<T>, p: &ConvParams<'_, T>) -> Result<Dims> {
    let (n, cin, h, w) = x.dims4()?;
    let (cout, wcin, kh, kw) = p.weight.dims4()?;
    if wcin != cin {
        return Err(shape_err!(
            "conv: input has {cin} channels, weight expects {wcin}"
        ));
    }
    if p.bias.shape() != [cout] {
        return Err(shape_err!(
            "conv: bias shape {:?}, expected [{cout}]",
            p.bias.shape()
        ));
    }
    if p.stride == 0 {
        return Err(shape_err!("conv: stride must be positive"));
    }
    let (hp, wp) = (h + 2 * p.padding, w + 2 * p.padding);
    if hp < kh || wp < kw {
        return Err(shape_err!(
            "conv: kernel {kh}x{kw} larger than padded input {hp}x{wp}"
        ));
    }
    Ok(Dims {
        n,
        cin,
        h,
        w,
        cout,
        kh,
        kw,
        oh: (hp - kh) / p.stride + 1,
        ow: (wp - kw) / p.stride + 1,
        stride: p.stride,
        pad: p.padding,
    })
}

/// Expands one image `[C_in, H, W]` into `[C_in·K_h·K_w, H'·W']`.
fn im2col<T: Real>(img: &[T], d: &Dims, cols: &mut [T]) {
    let out_len = d.out_len();
    for c in 0..d.cin {
        let plane = &img[c * d.h * d.w..(c + 1) * d.h * d.w];
        for i in 0..d.kh {
            for j in 0..d.kw {
                let row = (c * d.kh + i) * d.kw + j;
                let dst = &mut cols[row * out_len..(row + 1) * out_len];
                for oy in 0..d.oh {
                    let iy = (oy * d.stride + i) as isize - d.pad as isize;
                    let line = &mut dst[oy * d.ow..(oy + 1) * d.ow];
                    if iy < 0 || iy >= d.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    for (ox, out) in line.iter_mut().enumerate() {
                        let ix = (ox * d.stride + j) as isize - d.pad as isize;
                        *out = if ix < 0 || ix >= d.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatters a patch-matrix gradient back onto an image gradient (accumulating).
fn col2im<T: Real>(cols: &[T], d: &Dims, img: &mut [T]) {
    let out_len = d.out_len();
    for c in 0..d.cin {
        let plane = &mut img[c * d.h * d.w..(c + 1) * d.h * d.w];
        for i in 0..d.kh {
            for j in 0..d.kw {
                let row = (c * d.kh + i) * d.kw + j;
                let src = &cols[row * out_len..(row + 1) * out_len];
                for oy in 0..d.oh {
                    let iy = (oy * d.stride + i) as isize - d.pad as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    for (ox, &g) in src[oy * d.ow..(oy + 1) * d.ow].iter().enumerate() {
                        let ix = (ox * d.stride + j) as isize - d.pad as isize;
                        if ix >= 0 && ix < d.w as isize {
                            dst[ix as usize] = dst[ix as usize] + g;
                        }
                    }
                }
            }
        }
    }
}

/// `out[n,o,y,x] = bias[o] + Σ_{c,i,j} weight[o,c,i,j] · x_pad[n,c,y·s+i,x·s+j]`.
pub fn conv2d_forward<T: Real>(x: &Tensor<T>, p: &ConvParams<'_, T>) -> Result<Tensor<T>> {
    let d = dims(x, p)?;
    let in_len = d.cin * d.h * d.w;
    let out_len = d.out_len();
    let mut out = vec![T::zero(); d.n * d.cout * out_len];
    let mut cols = if d.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); d.patch_len() * out_len]
    };
    for n in 0..d.n {
        let img = &x.data()[n * in_len..(n + 1) * in_len];
        let dst = &mut out[n * d.cout * out_len..(n + 1) * d.cout * out_len];
        for (o, chunk) in dst.chunks_exact_mut(out_len).enumerate() {
            chunk.fill(p.bias.data()[o]);
        }
        let patches: &[T] = if d.is_pointwise() {
            img
        } else {
            im2col(img, &d, &mut cols);
            &cols
        };
        matmul(
            d.cout,
            d.patch_len(),
            out_len,
            p.weight.data(),
            false,
            patches,
            false,
            T::one(),
            dst,
        );
    }
    let out = Tensor::new(&[d.n, d.cout, d.oh, d.ow], out)?;
    Ok(out)
}

/// Exact gradients of [`conv2d_forward`] with respect to input, weight and bias.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    p: &ConvParams<'_, T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let (gx, gw, gb) = conv2d_backward_selective(x, p, grad_out, true, true)?;
    Ok(ConvGrads {
        grad_x: gx.expect("input gradient requested"),
        grad_weight: gw.expect("weight gradient requested"),
        grad_bias: gb.expect("bias gradient requested"),
    })
}

type Selective<T> = (Option<Tensor<T>>, Option<Tensor<T>>, Option<Tensor<T>>);

/// Backward pass that skips the input or parameter gradients when unneeded.
pub(crate) fn conv2d_backward_selective<T: Real>(
    x: &Tensor<T>,
    p: &ConvParams<'_, T>,
    grad_out: &Tensor<T>,
    need_input: bool,
    need_params: bool,
) -> Result<Selective<T>> {
    let d = dims(x, p)?;
    let expected = [d.n, d.cout, d.oh, d.ow];
    if grad_out.shape() != expected {
        return Err(shape_err!(
            "conv backward: grad_out {:?}, expected {expected:?}",
            grad_out.shape()
        ));
    }
    let in_len = d.cin * d.h * d.w;
    let out_len = d.out_len();
    let patch_len = d.patch_len();

    let mut grad_w = need_params.then(|| vec![T::zero(); d.cout * patch_len]);
    let mut grad_b = need_params.then(|| vec![0.0f64; d.cout]);
    let mut grad_x = need_input.then(|| vec![T::zero(); x.len()]);
    let pointwise = d.is_pointwise();
    let mut cols = if pointwise {
        Vec::new()
    } else {
        vec![T::zero(); patch_len * out_len]
    };

    for n in 0..d.n {
        let img = &x.data()[n * in_len..(n + 1) * in_len];
        let go = &grad_out.data()[n * d.cout * out_len..(n + 1) * d.cout * out_len];
        if let (Some(gw), Some(gb)) = (grad_w.as_mut(), grad_b.as_mut()) {
            let patches: &[T] = if pointwise {
                img
            } else {
                im2col(img, &d, &mut cols);
                &cols
            };
            // gW += gO · patchesᵀ
            matmul(d.cout, out_len, patch_len, go, false, patches, true, T::one(), gw);
            for (o, chunk) in go.chunks_exact(out_len).enumerate() {
                gb[o] += chunk.iter().map(|v| v.f64()).sum::<f64>();
            }
        }
        if let Some(gx) = grad_x.as_mut() {
            let gx_img = &mut gx[n * in_len..(n + 1) * in_len];
            if pointwise {
                // gX = Wᵀ · gO written straight into the image gradient
                matmul(patch_len, d.cout, out_len, p.weight.data(), true, go, false, T::zero(), gx_img);
            } else {
                matmul(patch_len, d.cout, out_len, p.weight.data(), true, go, false, T::zero(), &mut cols);
                col2im(&cols, &d, gx_img);
            }
        }
    }

    let grad_x = grad_x.map(|g| Tensor::new(x.shape(), g)).transpose()?;
    let grad_w = grad_w
        .map(|g| Tensor::new(p.weight.shape(), g))
        .transpose()?;
    let grad_b = grad_b
        .map(|g| Tensor::new(&[d.cout], g.into_iter().map(T::of).collect()))
        .transpose()?;
    Ok((grad_x, grad_w, grad_b))
}
