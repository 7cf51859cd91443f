//! Parameter initialization schemes.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::network::{LayerKind, NetworkSpec, ParamStore};
use crate::tensor::Tensor;

pub const BIAS_INIT: f32 = 0.01;
pub const GAUSSIAN_STD: f64 = 0.01;
pub const UNIFORM_LIMIT: f64 = 0.01;

/// How convolution kernels are drawn. Biases are always `0.01`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMethod {
    /// N(0, 0.01²)
    Gaussian,
    /// U(-0.01, 0.01)
    Uniform,
    /// U(±sqrt(6 / (fan_in + fan_out)))
    Xavier,
    /// N(0, 2 / fan_in)
    Msra,
}

impl InitMethod {
    pub const ALL: [InitMethod; 4] = [
        InitMethod::Gaussian,
        InitMethod::Uniform,
        InitMethod::Xavier,
        InitMethod::Msra,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InitMethod::Gaussian => "gaussian",
            InitMethod::Uniform => "uniform",
            InitMethod::Xavier => "xavier",
            InitMethod::Msra => "msra",
        }
    }
}

impl fmt::Display for InitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        InitMethod::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown init method `{s}`")))
    }
}

/// `(fan_in, fan_out)` of a `[C_out, C_in, K_h, K_w]` kernel.
pub fn fans(shape: &[usize]) -> (usize, usize) {
    let receptive: usize = shape[2..].iter().product();
    (shape[1] * receptive, shape[0] * receptive)
}

pub fn xavier_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = fans(shape);
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn msra_std(shape: &[usize]) -> f64 {
    (2.0 / fans(shape).0 as f64).sqrt()
}

fn draw_kernel<R: Rng + ?Sized>(shape: &[usize], method: InitMethod, rng: &mut R) -> Tensor {
    let len: usize = shape.iter().product();
    let data: Vec<f32> = match method {
        InitMethod::Gaussian => sample(Normal::new(0.0, GAUSSIAN_STD).unwrap(), len, rng),
        InitMethod::Msra => sample(Normal::new(0.0, msra_std(shape)).unwrap(), len, rng),
        InitMethod::Uniform => sample(Uniform::new_inclusive(-UNIFORM_LIMIT, UNIFORM_LIMIT).unwrap(), len, rng),
        InitMethod::Xavier => {
            let b = xavier_bound(shape);
            sample(Uniform::new_inclusive(-b, b).unwrap(), len, rng)
        }
    };
    Tensor::new(shape, data).expect("shape from spec")
}

fn sample<D: Distribution<f64>, R: Rng + ?Sized>(d: D, len: usize, rng: &mut R) -> Vec<f32> {
    (0..len).map(|_| d.sample(rng) as f32).collect()
}

/// Fresh trainable parameters for every layer in `spec`.
pub fn init_params<R: Rng + ?Sized>(spec: &NetworkSpec, method: InitMethod, rng: &mut R) -> ParamStore {
    let mut store = ParamStore::new();
    for layer in &spec.layers {
        match layer.kind {
            LayerKind::Conv { .. } => {
                for (name, shape, _) in layer.params() {
                    let value = if name.ends_with(".weight") {
                        draw_kernel(&shape, method, rng)
                    } else {
                        Tensor::full(&shape, BIAS_INIT)
                    };
                    store.insert(name, value, true, false);
                }
            }
            LayerKind::BatchNorm { channels } => {
                let n = &layer.name;
                store.insert(format!("{n}.gamma"), Tensor::full(&[channels], 1.0), true, false);
                store.insert(format!("{n}.beta"), Tensor::zeros(&[channels]), true, false);
                store.insert(format!("{n}.running_mean"), Tensor::zeros(&[channels]), false, true);
                store.insert(format!("{n}.running_var"), Tensor::full(&[channels], 1.0), false, true);
            }
            _ => {}
        }
    }
    store
}
