//! Inverted dropout: kept units are scaled by `1/keep_prob` at train time.

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::ops::Mode;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub shape: Vec<usize>,
}

impl DropoutMask {
    pub fn all_keep(shape: &[usize]) -> Self {
        Self {
            keep: vec![true; shape.iter().product()],
            shape: shape.to_vec(),
        }
    }
}

fn check_keep_prob(keep_prob: f64) -> Result<()> {
    if keep_prob > 0.0 && keep_prob <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "keep probability must lie in (0, 1], got {keep_prob}"
        )))
    }
}

pub fn dropout_forward<T: Real, R: Rng + ?Sized>(
    x: &Tensor<T>,
    keep_prob: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor<T>, DropoutMask)> {
    check_keep_prob(keep_prob)?;
    if mode == Mode::Eval {
        return Ok((x.clone(), DropoutMask::all_keep(x.shape())));
    }
    let scale = T::of(1.0 / keep_prob);
    let keep: Vec<bool> = (0..x.len())
        .map(|_| keep_prob >= 1.0 || rng.random::<f64>() < keep_prob)
        .collect();
    let data = x
        .data()
        .iter()
        .zip(&keep)
        .map(|(&v, &k)| if k { v * scale } else { T::zero() })
        .collect();
    Ok((
        Tensor::new(x.shape(), data)?,
        DropoutMask {
            keep,
            shape: x.shape().to_vec(),
        },
    ))
}

pub fn dropout_backward<T: Real>(
    mask: &DropoutMask,
    keep_prob: f64,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_keep_prob(keep_prob)?;
    if mask.shape != grad_out.shape() {
        return Err(shape_err!(
            "dropout backward: mask {:?} vs grad {:?}",
            mask.shape,
            grad_out.shape()
        ));
    }
    let scale = T::of(1.0 / keep_prob);
    let data = grad_out
        .data()
        .iter()
        .zip(&mask.keep)
        .map(|(&g, &k)| if k { g * scale } else { T::zero() })
        .collect();
    Tensor::new(grad_out.shape(), data)
}
