//! Layer-list descriptions of the extractor and classifier networks.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    /// Stride 1, symmetric zero padding `(kernel - 1) / 2`.
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    Relu,
    /// 2×2 window, stride 2.
    MaxPool,
    BatchNorm {
        channels: usize,
    },
    Dropout {
        keep_prob: f64,
    },
    GlobalAvgPool,
}

impl LayerKind {
    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool => "maxpool",
            LayerKind::BatchNorm { .. } => "batchnorm",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::GlobalAvgPool => "global_avg_pool",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    /// `(parameter name, shape, is_buffer)` for every tensor the layer owns.
    pub fn params(&self) -> Vec<(String, Vec<usize>, bool)> {
        match self.kind {
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
            } => vec![
                (
                    format!("{}.weight", self.name),
                    vec![out_channels, in_channels, kernel, kernel],
                    false,
                ),
                (format!("{}.bias", self.name), vec![out_channels], false),
            ],
            LayerKind::BatchNorm { channels } => vec![
                (format!("{}.gamma", self.name), vec![channels], false),
                (format!("{}.beta", self.name), vec![channels], false),
                (format!("{}.running_mean", self.name), vec![channels], true),
                (format!("{}.running_var", self.name), vec![channels], true),
            ],
            _ => Vec::new(),
        }
    }
}

/// Ordered layers plus the declared per-image input shape `[C, H, W]`.
///
/// Only the channel count is enforced at run time; any spatial extent
/// divisible by the pooling factor is accepted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_shape: [usize; 3], layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = Self {
            input_shape,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks name uniqueness and channel chaining.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for layer in &self.layers {
            if !seen.insert(layer.name.as_str()) {
                return Err(shape_err!("duplicate layer name `{}`", layer.name));
            }
        }
        self.output_shape(self.input_shape).map(|_| ())
    }

    /// Per-image output shape for a per-image input shape.
    pub fn output_shape(&self, input: [usize; 3]) -> Result<Vec<usize>> {
        let [mut c, mut h, mut w] = input;
        let mut flat = false;
        for layer in &self.layers {
            if flat {
                return Err(shape_err!(
                    "layer `{}` follows global pooling",
                    layer.name
                ));
            }
            match layer.kind {
                LayerKind::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                } => {
                    if in_channels != c {
                        return Err(shape_err!(
                            "layer `{}` expects {in_channels} channels, receives {c}",
                            layer.name
                        ));
                    }
                    if kernel % 2 == 0 {
                        return Err(shape_err!("layer `{}`: kernel must be odd", layer.name));
                    }
                    c = out_channels;
                }
                LayerKind::BatchNorm { channels } => {
                    if channels != c {
                        return Err(shape_err!(
                            "layer `{}` expects {channels} channels, receives {c}",
                            layer.name
                        ));
                    }
                }
                LayerKind::MaxPool => {
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(shape_err!(
                            "layer `{}`: extents {h}x{w} not divisible by 2",
                            layer.name
                        ));
                    }
                    h /= 2;
                    w /= 2;
                }
                LayerKind::Dropout { keep_prob } => {
                    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
                        return Err(shape_err!(
                            "layer `{}`: keep probability {keep_prob} outside (0, 1]",
                            layer.name
                        ));
                    }
                }
                LayerKind::Relu => {}
                LayerKind::GlobalAvgPool => flat = true,
            }
        }
        Ok(if flat { vec![c] } else { vec![c, h, w] })
    }

    /// Every parameter tensor in layer order.
    pub fn param_table(&self) -> Vec<(String, Vec<usize>, bool)> {
        self.layers.iter().flat_map(LayerSpec::params).collect()
    }

    /// Number of learnable scalars (running statistics excluded).
    pub fn learnable_count(&self) -> usize {
        self.param_table()
            .iter()
            .filter(|(_, _, buffer)| !buffer)
            .map(|(_, shape, _)| shape.iter().product::<usize>())
            .sum()
    }

    pub fn count_kind(&self, tag: &str) -> usize {
        self.layers.iter().filter(|l| l.kind.tag() == tag).count()
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// `self` followed by `next`, with `self`'s declared input.
    pub fn concat(&self, next: &NetworkSpec) -> Result<Self> {
        let mut layers = self.layers.clone();
        layers.extend(next.layers.iter().cloned());
        NetworkSpec::new(self.input_shape, layers)
    }

    /// Prefix ending with the `pool`-th max-pool layer (1-based).
    pub fn truncate_after_pool(&self, pool: usize) -> Result<Self> {
        let mut seen = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.kind == LayerKind::MaxPool {
                seen += 1;
                if seen == pool {
                    return NetworkSpec::new(self.input_shape, self.layers[..=i].to_vec());
                }
            }
        }
        Err(shape_err!(
            "network has {seen} pool layers, requested pool {pool}"
        ))
    }
}

fn conv(name: &str, in_channels: usize, out_channels: usize, kernel: usize) -> LayerSpec {
    LayerSpec::new(
        name,
        LayerKind::Conv {
            in_channels,
            out_channels,
            kernel,
        },
    )
}

/// Names of the extractor's seven convolutions in order.
pub const EXTRACTOR_CONVS: [&str; 7] = [
    "conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1", "conv3_2", "conv3_3",
];

pub const NUM_CLASSES: usize = 6;
pub const FEATURE_CHANNELS: usize = 256;
pub const INPUT_SIZE: usize = 224;
pub const FEATURE_SIZE: usize = 28;

/// The VGG16 prefix through its third pooling layer.
pub fn build_feature_extractor() -> NetworkSpec {
    let blocks: [&[(&str, usize, usize)]; 3] = [
        &[("conv1_1", 3, 64), ("conv1_2", 64, 64)],
        &[("conv2_1", 64, 128), ("conv2_2", 128, 128)],
        &[
            ("conv3_1", 128, 256),
            ("conv3_2", 256, 256),
            ("conv3_3", 256, 256),
        ],
    ];
    let mut layers = Vec::new();
    for (b, block) in blocks.iter().enumerate() {
        for &(name, cin, cout) in block.iter() {
            layers.push(conv(name, cin, cout, 3));
            layers.push(LayerSpec::new(name.replace("conv", "relu"), LayerKind::Relu));
        }
        layers.push(LayerSpec::new(format!("pool{}", b + 1), LayerKind::MaxPool));
    }
    NetworkSpec::new([3, INPUT_SIZE, INPUT_SIZE], layers).expect("extractor spec is consistent")
}

/// BN → conv3×3 → ReLU → dropout(0.6) → conv3×3 → ReLU → dropout(0.8) → conv1×1 → global pool.
pub fn build_classifier() -> NetworkSpec {
    let layers = vec![
        LayerSpec::new(
            "cls.bn",
            LayerKind::BatchNorm {
                channels: FEATURE_CHANNELS,
            },
        ),
        conv("cls.conv1", FEATURE_CHANNELS, 128, 3),
        LayerSpec::new("cls.relu1", LayerKind::Relu),
        LayerSpec::new("cls.drop1", LayerKind::Dropout { keep_prob: 0.6 }),
        conv("cls.conv2", 128, 64, 3),
        LayerSpec::new("cls.relu2", LayerKind::Relu),
        LayerSpec::new("cls.drop2", LayerKind::Dropout { keep_prob: 0.8 }),
        conv("cls.conv3", 64, NUM_CLASSES, 1),
        LayerSpec::new("cls.gap", LayerKind::GlobalAvgPool),
    ];
    NetworkSpec::new([FEATURE_CHANNELS, FEATURE_SIZE, FEATURE_SIZE], layers)
        .expect("classifier spec is consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extractor_shape_and_layout() {
        let spec = build_feature_extractor();
        assert_eq!(spec.output_shape([3, 224, 224]).unwrap(), vec![256, 28, 28]);
        assert_eq!(spec.count_kind("conv"), 7);
        assert_eq!(spec.count_kind("maxpool"), 3);
        assert_eq!(spec.param_table().len(), 14);
    }

    #[test]
    fn extractor_parameter_count() {
        // independent arithmetic: Σ cout·cin·9 + cout
        let convs = [(3, 64), (64, 64), (64, 128), (128, 128), (128, 256), (256, 256), (256, 256)];
        let expected: usize = convs.iter().map(|&(i, o)| o * i * 9 + o).sum();
        assert_eq!(expected, 1_735_488);
        assert_eq!(build_feature_extractor().learnable_count(), expected);
    }

    #[test]
    fn classifier_shape_and_layout() {
        let spec = build_classifier();
        assert_eq!(spec.output_shape([256, 28, 28]).unwrap(), vec![6]);
        let keeps: Vec<f64> = spec
            .layers
            .iter()
            .filter_map(|l| match l.kind {
                LayerKind::Dropout { keep_prob } => Some(keep_prob),
                _ => None,
            })
            .collect();
        assert_eq!(keeps, vec![0.6, 0.8]);
        assert_eq!(spec.layers[0].kind.tag(), "batchnorm");
        assert_eq!(spec.layers.last().unwrap().kind, LayerKind::GlobalAvgPool);
        // no dense layer: every weight is a convolution kernel
        assert!(spec
            .param_table()
            .iter()
            .filter(|(n, _, _)| n.ends_with(".weight"))
            .all(|(_, s, _)| s.len() == 4));
        assert_eq!(spec.learnable_count(), 369_734);
    }

    #[test]
    fn rejects_broken_chains_and_duplicates() {
        let bad = NetworkSpec::new([3, 8, 8], vec![conv("a", 4, 8, 3)]);
        assert!(bad.is_err());
        let dup = NetworkSpec::new([3, 8, 8], vec![conv("a", 3, 3, 3), conv("a", 3, 3, 3)]);
        assert!(dup.is_err());
    }

    #[test]
    fn truncation_by_pool() {
        let spec = build_feature_extractor();
        let p1 = spec.truncate_after_pool(1).unwrap();
        assert_eq!(p1.output_shape([3, 224, 224]).unwrap(), vec![64, 112, 112]);
        assert!(spec.truncate_after_pool(4).is_err());
    }
}
