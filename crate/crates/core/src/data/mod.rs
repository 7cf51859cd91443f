//! Images, datasets, splits, augmentation, noise and the synthetic generator.

pub mod augment;
pub mod dataset;
pub mod noise;
pub mod preprocess;
pub mod split;
pub mod synth;

pub use augment::{expand, AugmentationPlan};
pub use dataset::{
    decode_gray, load_dataset, load_dataset_cache, save_dataset_cache, Dataset, LabeledImage, CLASS_NAMES,
    IMAGE_SIZE, NUM_CLASSES,
};
pub use noise::{add_gaussian_noise, add_noise_to_dataset, NoiseSpec, NoisyImage};
pub use preprocess::{preprocess, resize_bilinear};
pub use split::{sample_n_per_class, split, SplitSpec};
pub use synth::synth_dataset;
