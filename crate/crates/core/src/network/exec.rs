//! Running a [`NetworkSpec`] forward and backward over a [`ParamStore`].

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::network::params::ParamStore;
use crate::network::spec::{LayerKind, LayerSpec, NetworkSpec};
use crate::ops::{self, BatchNormParams, ConvParams, DropoutMask, Mode, PoolCache};
use crate::tensor::{Real, Tensor};

/// What one layer's backward needs from its forward.
#[derive(Clone, Debug)]
pub enum LayerRecord<T: Real = f32> {
    Conv { input: Tensor<T> },
    Relu { input: Tensor<T> },
    MaxPool { cache: PoolCache },
    BatchNorm { input: Tensor<T> },
    Dropout { mask: DropoutMask, keep_prob: f64 },
    GlobalAvgPool { h: usize, w: usize },
}

#[derive(Clone, Debug)]
pub struct Tape<T: Real = f32> {
    pub mode: Mode,
    pub records: Vec<LayerRecord<T>>,
}

fn conv_params<'a, T: Real>(params: &'a ParamStore<T>, layer: &LayerSpec, kernel: usize) -> Result<ConvParams<'a, T>> {
    Ok(ConvParams {
        weight: params.value(&format!("{}.weight", layer.name))?,
        bias: params.value(&format!("{}.bias", layer.name))?,
        stride: 1,
        padding: (kernel - 1) / 2,
    })
}

fn bn_params<T: Real>(params: &ParamStore<T>, name: &str) -> Result<BatchNormParams<T>> {
    let mut p = BatchNormParams::new(0);
    p.gamma = params.value(&format!("{name}.gamma"))?.data().to_vec();
    p.beta = params.value(&format!("{name}.beta"))?.data().to_vec();
    p.running_mean = params.value(&format!("{name}.running_mean"))?.data().to_vec();
    p.running_var = params.value(&format!("{name}.running_var"))?.data().to_vec();
    Ok(p)
}

fn store_running_stats<T: Real>(params: &mut ParamStore<T>, name: &str, p: &BatchNormParams<T>) -> Result<()> {
    params
        .get_mut(&format!("{name}.running_mean"))?
        .value
        .data_mut()
        .copy_from_slice(&p.running_mean);
    params
        .get_mut(&format!("{name}.running_var"))?
        .value
        .data_mut()
        .copy_from_slice(&p.running_var);
    Ok(())
}

fn check_input<T: Real>(spec: &NetworkSpec, x: &Tensor<T>) -> Result<()> {
    let (_, c, _, _) = x.dims4()?;
    if c != spec.input_shape[0] {
        return Err(shape_err!(
            "network expects {} input channels, got {c}",
            spec.input_shape[0]
        ));
    }
    Ok(())
}

fn forward_layer<T: Real, R: Rng + ?Sized>(
    layer: &LayerSpec,
    params: &mut ParamStore<T>,
    x: &Tensor<T>,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor<T>, LayerRecord<T>)> {
    Ok(match layer.kind {
        LayerKind::Conv { kernel, .. } => {
            let y = ops::conv2d_forward(x, &conv_params(params, layer, kernel)?)?;
            (y, LayerRecord::Conv { input: x.clone() })
        }
        LayerKind::Relu => (ops::relu_forward(x), LayerRecord::Relu { input: x.clone() }),
        LayerKind::MaxPool => {
            let (y, cache) = ops::maxpool2d_forward(x, 2, 2)?;
            (y, LayerRecord::MaxPool { cache })
        }
        LayerKind::BatchNorm { .. } => {
            let mut p = bn_params(params, &layer.name)?;
            let y = ops::batchnorm_forward(x, &mut p, mode)?;
            if mode == Mode::Train {
                store_running_stats(params, &layer.name, &p)?;
            }
            (y, LayerRecord::BatchNorm { input: x.clone() })
        }
        LayerKind::Dropout { keep_prob } => {
            let (y, mask) = ops::dropout_forward(x, keep_prob, mode, rng)?;
            (y, LayerRecord::Dropout { mask, keep_prob })
        }
        LayerKind::GlobalAvgPool => {
            let (_, _, h, w) = x.dims4()?;
            (ops::global_avg_pool_forward(x)?, LayerRecord::GlobalAvgPool { h, w })
        }
    })
}

/// Applies every layer in order.
///
/// Train mode records a tape, updates batch-norm running statistics and draws
/// dropout masks from `rng`. Eval mode leaves `params` untouched and never
/// reads `rng`.
pub fn forward<T: Real, R: Rng + ?Sized>(
    spec: &NetworkSpec,
    params: &mut ParamStore<T>,
    x: &Tensor<T>,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor<T>, Tape<T>)> {
    check_input(spec, x)?;
    let mut records = Vec::with_capacity(spec.layers.len());
    let mut cur = x.clone();
    for layer in &spec.layers {
        let (y, record) =
            forward_layer(layer, params, &cur, mode, rng).map_err(|e| e.in_layer(&layer.name))?;
        if mode == Mode::Train {
            records.push(record);
        }
        cur = y;
    }
    Ok((cur, Tape { mode, records }))
}

/// Eval-mode forward without a tape; a pure function of `(params, x)`.
pub fn infer<T: Real>(spec: &NetworkSpec, params: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    check_input(spec, x)?;
    let mut cur = x.clone();
    for layer in &spec.layers {
        let step = || -> Result<Tensor<T>> {
            match layer.kind {
                LayerKind::Conv { kernel, .. } => ops::conv2d_forward(&cur, &conv_params(params, layer, kernel)?),
                LayerKind::Relu => Ok(ops::relu_forward(&cur)),
                LayerKind::MaxPool => ops::maxpool2d_forward(&cur, 2, 2).map(|(y, _)| y),
                LayerKind::BatchNorm { .. } => {
                    let mut p = bn_params(params, &layer.name)?;
                    ops::batchnorm_forward(&cur, &mut p, Mode::Eval)
                }
                LayerKind::Dropout { .. } => Ok(cur.clone()),
                LayerKind::GlobalAvgPool => ops::global_avg_pool_forward(&cur),
            }
        };
        cur = step().map_err(|e| e.in_layer(&layer.name))?;
    }
    Ok(cur)
}

fn has_trainable<T: Real>(params: &ParamStore<T>, layer: &LayerSpec) -> bool {
    layer
        .params()
        .iter()
        .any(|(name, _, _)| params.get(name).map(|p| p.trainable).unwrap_or(false))
}

fn accumulate<T: Real>(params: &mut ParamStore<T>, name: &str, grad: &[T]) -> Result<()> {
    let p = params.get_mut(name)?;
    if !p.trainable {
        return Ok(());
    }
    if p.grad.len() != grad.len() {
        return Err(shape_err!("gradient for `{name}` has {} elements, slot has {}", grad.len(), p.grad.len()));
    }
    for (slot, &g) in p.grad.data_mut().iter_mut().zip(grad) {
        *slot = *slot + g;
    }
    Ok(())
}

fn tape_mismatch(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(format!("tape mismatch: {}", msg.into()))
}

/// Accumulates analytic gradients into the slots of trainable parameters.
///
/// Propagation stops at the earliest layer that owns a trainable parameter;
/// frozen prefixes never see a gradient.
pub fn backward<T: Real>(
    spec: &NetworkSpec,
    params: &mut ParamStore<T>,
    tape: &Tape<T>,
    grad_output: &Tensor<T>,
) -> Result<()> {
    if tape.mode != Mode::Train {
        return Err(tape_mismatch("backward requires a train-mode tape"));
    }
    if tape.records.len() != spec.layers.len() {
        return Err(tape_mismatch(format!(
            "{} records for {} layers",
            tape.records.len(),
            spec.layers.len()
        )));
    }
    let Some(first) = spec.layers.iter().position(|l| has_trainable(params, l)) else {
        return Ok(());
    };
    let mut grad = grad_output.clone();
    for idx in (first..spec.layers.len()).rev() {
        let layer = &spec.layers[idx];
        let need_input = idx > first;
        let record = &tape.records[idx];
        let step = |grad: &Tensor<T>, params: &mut ParamStore<T>| -> Result<Option<Tensor<T>>> {
            match (&layer.kind, record) {
                (LayerKind::Conv { kernel, .. }, LayerRecord::Conv { input }) => {
                    let trainable = has_trainable(params, layer);
                    let (gx, gw, gb) = {
                        let p = conv_params(params, layer, *kernel)?;
                        ops::conv2d_backward_selective(input, &p, grad, need_input, trainable)?
                    };
                    if let (Some(gw), Some(gb)) = (gw, gb) {
                        accumulate(params, &format!("{}.weight", layer.name), gw.data())?;
                        accumulate(params, &format!("{}.bias", layer.name), gb.data())?;
                    }
                    Ok(gx)
                }
                (LayerKind::Relu, LayerRecord::Relu { input }) => {
                    ops::relu_backward(input, grad).map(Some)
                }
                (LayerKind::MaxPool, LayerRecord::MaxPool { cache }) => {
                    ops::maxpool2d_backward(grad, cache, &cache.input_shape).map(Some)
                }
                (LayerKind::BatchNorm { .. }, LayerRecord::BatchNorm { input }) => {
                    let p = bn_params(params, &layer.name)?;
                    let g = ops::batchnorm_backward(input, &p, grad)?;
                    accumulate(params, &format!("{}.gamma", layer.name), &g.grad_gamma)?;
                    accumulate(params, &format!("{}.beta", layer.name), &g.grad_beta)?;
                    Ok(Some(g.grad_x))
                }
                (LayerKind::Dropout { .. }, LayerRecord::Dropout { mask, keep_prob }) => {
                    ops::dropout_backward(mask, *keep_prob, grad).map(Some)
                }
                (LayerKind::GlobalAvgPool, LayerRecord::GlobalAvgPool { h, w }) => {
                    ops::global_avg_pool_backward(grad, *h, *w).map(Some)
                }
                (kind, _) => Err(tape_mismatch(format!("record does not match {} layer", kind.tag()))),
            }
        };
        let next = step(&grad, params).map_err(|e| e.in_layer(&layer.name))?;
        match next {
            Some(g) if need_input => grad = g,
            _ => break,
        }
    }
    Ok(())
}
