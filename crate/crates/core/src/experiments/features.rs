//! Frozen-extractor feature maps, memoized by image content.
//!
//! Each distinct image is pushed through the extractor once per process.
//! Results stay in memory up to a byte budget and spill to disk beyond it;
//! with a cache directory they also persist across runs, keyed by the
//! image and a fingerprint of the extractor weights.

use std::borrow::Cow;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::data::{preprocess, LabeledImage};
use crate::error::{Error, Result};
use crate::network::{infer, read_container, write_container, NetworkSpec, ParamStore};
use crate::tensor::Tensor;
use crate::training::Samples;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a, chosen for a hash that is stable across builds and platforms.
fn fnv1a(mut state: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

/// Order-sensitive fingerprint of every tensor name and value bit.
pub fn params_fingerprint(params: &ParamStore) -> u64 {
    let mut h = FNV_OFFSET;
    for (name, p) in params.iter() {
        h = fnv1a(h, name.as_bytes());
        for v in p.value.data() {
            h = fnv1a(h, &v.to_bits().to_le_bytes());
        }
    }
    h
}

fn image_key(fingerprint: u64, img: &LabeledImage) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &fingerprint.to_le_bytes());
    h = fnv1a(h, &(img.width as u64).to_le_bytes());
    h = fnv1a(h, &(img.height as u64).to_le_bytes());
    fnv1a(h, &img.pixels)
}

const FEATURE_TENSOR: &str = "features";

fn read_feature(path: &Path) -> Result<Tensor> {
    read_container(path)?
        .into_iter()
        .find(|(n, _)| n == FEATURE_TENSOR)
        .map(|(_, t)| t)
        .ok_or_else(|| Error::MissingTensor(FEATURE_TENSOR.into()))
}

#[derive(Clone, Debug)]
pub enum FeatureRef {
    Memory(Arc<Tensor>),
    Disk(PathBuf),
}

/// Feature maps for a list of images, in image order.
#[derive(Clone, Debug, Default)]
pub struct FeatureSet(pub Vec<FeatureRef>);

impl Samples for FeatureSet {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn get(&self, index: usize) -> Result<Cow<'_, Tensor>> {
        match &self.0[index] {
            FeatureRef::Memory(t) => Ok(Cow::Borrowed(t.as_ref())),
            FeatureRef::Disk(path) => read_feature(path).map(Cow::Owned),
        }
    }
}

/// Preprocessed images produced on demand, for training the full network.
pub struct ImageSamples<'a>(pub &'a [LabeledImage]);

impl Samples for ImageSamples<'_> {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn get(&self, index: usize) -> Result<Cow<'_, Tensor>> {
        Ok(Cow::Owned(preprocess(&self.0[index])))
    }
}

pub struct FeatureStore {
    spec: NetworkSpec,
    params: ParamStore,
    fingerprint: u64,
    cache_dir: Option<PathBuf>,
    spill: OnceLock<tempfile::TempDir>,
    budget_bytes: usize,
    used_bytes: AtomicUsize,
    entries: Mutex<HashMap<u64, Arc<OnceLock<FeatureRef>>>>,
}

impl FeatureStore {
    pub fn new(spec: NetworkSpec, params: ParamStore, cache_dir: Option<PathBuf>, budget_bytes: usize) -> Result<Self> {
        params.validate_against(&spec)?;
        if let Some(dir) = &cache_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(Self {
            fingerprint: params_fingerprint(&params),
            spec,
            params,
            cache_dir,
            spill: OnceLock::new(),
            budget_bytes,
            used_bytes: AtomicUsize::new(0),
            entries: Mutex::new(HashMap::new()),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Runs the extractor on one image, bypassing the memo.
    pub fn extract(&self, img: &LabeledImage) -> Result<Tensor> {
        let x = preprocess(img);
        let out = infer(&self.spec, &self.params, &Tensor::stack(&[&x])?)?;
        out.index_first(0)
    }

    /// Features for every image, computing only those not seen before.
    /// Work fans out over the current rayon pool.
    pub fn features(&self, images: &[LabeledImage]) -> Result<FeatureSet> {
        let refs = images
            .par_iter()
            .map(|img| self.feature(img))
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureSet(refs))
    }

    fn feature(&self, img: &LabeledImage) -> Result<FeatureRef> {
        let key = image_key(self.fingerprint, img);
        let slot = {
            let mut map = self.entries.lock().expect("feature map poisoned");
            Arc::clone(map.entry(key).or_default())
        };
        if let Some(r) = slot.get() {
            return Ok(r.clone());
        }
        // Concurrent requests for one key may both compute; the first result
        // wins and both are bitwise identical.
        let computed = self.materialize(key, img)?;
        Ok(slot.get_or_init(|| computed).clone())
    }

    fn materialize(&self, key: u64, img: &LabeledImage) -> Result<FeatureRef> {
        let cached = self.cache_dir.as_ref().map(|d| d.join(format!("{key:016x}.ssdr")));
        let tensor = match &cached {
            Some(path) if path.exists() => read_feature(path)?,
            _ => {
                let t = self.extract(img)?;
                if let Some(path) = &cached {
                    write_atomically(path, &t)?;
                }
                t
            }
        };
        let bytes = tensor.len() * std::mem::size_of::<f32>();
        let used = self.used_bytes.fetch_add(bytes, Ordering::Relaxed);
        if used + bytes <= self.budget_bytes {
            return Ok(FeatureRef::Memory(Arc::new(tensor)));
        }
        self.used_bytes.fetch_sub(bytes, Ordering::Relaxed);
        if let Some(path) = cached {
            return Ok(FeatureRef::Disk(path));
        }
        let dir = match self.spill.get() {
            Some(d) => d,
            None => {
                let d = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
                self.spill.get_or_init(|| d)
            }
        };
        let path = dir.path().join(format!("{key:016x}.ssdr"));
        write_atomically(&path, &tensor)?;
        Ok(FeatureRef::Disk(path))
    }
}

/// Writes through a temporary name so concurrent readers never see a partial file.
fn write_atomically(path: &Path, t: &Tensor) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{:?}", std::thread::current().id()).replace(['(', ')'], ""));
    write_container(&tmp, [(FEATURE_TENSOR, t)])?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes features as `feat_<idx>` plus a `labels` vector.
pub fn save_feature_cache<S: Samples + ?Sized>(path: &Path, features: &S, labels: &[usize]) -> Result<()> {
    if features.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature maps but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let items = (0..features.len())
        .map(|i| features.get(i).map(Cow::into_owned))
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = (0..items.len()).map(|i| format!("feat_{i}")).collect();
    let label_tensor = Tensor::new(&[labels.len().max(1)], labels_as_f32(labels))?;
    write_container(
        path,
        names
            .iter()
            .map(String::as_str)
            .zip(items.iter())
            .chain(std::iter::once(("labels", &label_tensor))),
    )
}

fn labels_as_f32(labels: &[usize]) -> Vec<f32> {
    if labels.is_empty() {
        vec![0.0]
    } else {
        labels.iter().map(|&l| l as f32).collect()
    }
}

/// Inverse of [`save_feature_cache`].
pub fn load_feature_cache(path: &Path) -> Result<(Vec<Tensor>, Vec<usize>)> {
    let mut feats: Vec<(usize, Tensor)> = Vec::new();
    let mut labels = None;
    for (name, t) in read_container(path)? {
        if name == "labels" {
            labels = Some(t.data().iter().map(|&v| v as usize).collect::<Vec<_>>());
        } else if let Some(i) = name.strip_prefix("feat_").and_then(|s| s.parse().ok()) {
            feats.push((i, t));
        } else {
            return Err(Error::UnknownTensor(name));
        }
    }
    feats.sort_by_key(|(i, _)| *i);
    if feats.iter().enumerate().any(|(k, (i, _))| k != *i) {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            message: "feature indices are not contiguous".into(),
        });
    }
    let labels = labels.ok_or_else(|| Error::MissingTensor("labels".into()))?;
    let labels = labels[..feats.len()].to_vec();
    Ok((feats.into_iter().map(|(_, t)| t).collect(), labels))
}
