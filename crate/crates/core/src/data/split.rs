//! Seeded train/test splitting and nested per-class subsampling.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, LabeledImage, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::seeding;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub per_class_train: usize,
    pub per_class_test: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            per_class_train: 150,
            per_class_test: 150,
        }
    }
}

fn class_indices(dataset: &Dataset) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); NUM_CLASSES];
    for (i, img) in dataset.images().iter().enumerate() {
        by_class[img.label].push(i);
    }
    by_class
}

fn gather(dataset: &Dataset, idx: impl IntoIterator<Item = usize>) -> Vec<LabeledImage> {
    idx.into_iter().map(|i| dataset.images()[i].clone()).collect()
}

/// Per class, a seeded shuffle sends the first `per_class_train` images to
/// train and the next `per_class_test` to test.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let need = spec.per_class_train + spec.per_class_test;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idx) in class_indices(dataset).into_iter().enumerate() {
        if idx.len() < need {
            return Err(Error::Data(format!(
                "class {class} has {} images, split needs {need}",
                idx.len()
            )));
        }
        idx.shuffle(&mut seeding::substream(spec.seed, seeding::SPLIT, class as u64));
        train.extend(gather(dataset, idx[..spec.per_class_train].iter().copied()));
        test.extend(gather(dataset, idx[spec.per_class_train..need].iter().copied()));
    }
    let src = dataset.provenance();
    Ok((
        Dataset::new(train, format!("{src} [train, split seed {}]", spec.seed)),
        Dataset::new(test, format!("{src} [test, split seed {}]", spec.seed)),
    ))
}

/// `n` images per class, uniform without replacement.
///
/// Draws a prefix of a per-class seeded permutation, so for a fixed seed the
/// sample for `n` is contained in the sample for any larger `n`.
pub fn sample_n_per_class(train: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    let by_class = class_indices(train);
    let available = by_class.iter().map(Vec::len).min().unwrap_or(0);
    if n == 0 || n > available {
        return Err(Error::InvalidArgument(format!(
            "per-class sample size {n} outside 1..={available}"
        )));
    }
    let mut images = Vec::with_capacity(n * NUM_CLASSES);
    for (class, mut idx) in by_class.into_iter().enumerate() {
        idx.shuffle(&mut seeding::substream(seed, seeding::SAMPLE, class as u64));
        images.extend(gather(train, idx[..n].iter().copied()));
    }
    Ok(Dataset::new(
        images,
        format!("{} [n={n}, sample seed {seed}]", train.provenance()),
    ))
}
