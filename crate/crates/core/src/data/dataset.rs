//! Labeled 8-bit grayscale images and directory-tree datasets.

use std::path::{Path, PathBuf};

use image::GrayImage;

use crate::error::{Error, Result};
use crate::network::{read_container, write_container};
use crate::tensor::Tensor;

/// Canonical class order; label ids index into this list.
pub const CLASS_NAMES: [&str; 6] = [
    "crazing",
    "inclusion",
    "patches",
    "pitted_surface",
    "rolled-in_scale",
    "scratches",
];
pub const NUM_CLASSES: usize = CLASS_NAMES.len();
pub const IMAGE_SIZE: usize = 200;

const EXTENSIONS: [&str; 4] = ["png", "bmp", "jpg", "jpeg"];

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabeledImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, `width` fastest.
    pub pixels: Vec<u8>,
    pub label: usize,
}

impl LabeledImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, label: usize) -> Result<Self> {
        if width * height != pixels.len() || width == 0 || height == 0 {
            return Err(Error::Data(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if label >= NUM_CLASSES {
            return Err(Error::Data(format!("label {label} out of range")));
        }
        Ok(Self {
            width,
            height,
            pixels,
            label,
        })
    }

    pub fn at(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| f64::from(p)).sum::<f64>() / self.pixels.len() as f64
    }

    /// Population variance of the pixel values.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.pixels
            .iter()
            .map(|&p| (f64::from(p) - mean).powi(2))
            .sum::<f64>()
            / self.pixels.len() as f64
    }

    pub fn with_pixels(&self, pixels: Vec<u8>) -> Self {
        debug_assert_eq!(pixels.len(), self.pixels.len());
        Self {
            pixels,
            ..self.clone()
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("pixel count matches extent")
            .save(path)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
    }
}

/// Decodes any supported file to 8-bit grayscale.
pub fn decode_gray(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    Ok((w as usize, h as usize, gray.into_raw()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Vec<LabeledImage>,
    provenance: String,
    class_counts: [usize; NUM_CLASSES],
}

impl Dataset {
    pub fn new(images: Vec<LabeledImage>, provenance: impl Into<String>) -> Self {
        let mut class_counts = [0; NUM_CLASSES];
        for img in &images {
            class_counts[img.label] += 1;
        }
        Self {
            images,
            provenance: provenance.into(),
            class_counts,
        }
    }

    pub fn images(&self) -> &[LabeledImage] {
        &self.images
    }

    pub fn into_images(self) -> Vec<LabeledImage> {
        self.images
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        self.class_counts
    }

    pub fn labels(&self) -> Vec<usize> {
        self.images.iter().map(|i| i.label).collect()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Writes `<root>/<class>/<index>.png` for every image.
    pub fn save_dir(&self, root: &Path) -> Result<()> {
        for name in CLASS_NAMES {
            let dir = root.join(name);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let mut per_class = [0usize; NUM_CLASSES];
        for img in &self.images {
            let idx = per_class[img.label];
            per_class[img.label] += 1;
            img.save_png(&root.join(CLASS_NAMES[img.label]).join(format!("{idx:04}.png")))?;
        }
        Ok(())
    }
}

fn canonical_class(dir_name: &str) -> Option<usize> {
    let norm = |s: &str| s.to_ascii_lowercase().replace('-', "_");
    let wanted = norm(dir_name);
    CLASS_NAMES.iter().position(|c| norm(c) == wanted)
}

/// Loads `<root>/<class_name>/*.{png,bmp,jpg}` in (class, filename) order.
///
/// Every image must decode to exactly 200×200.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let mut class_dirs: [Option<PathBuf>; NUM_CLASSES] = Default::default();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        if let Some(c) = entry.file_name().to_str().and_then(canonical_class) {
            class_dirs[c] = Some(path);
        }
    }
    let missing: Vec<&str> = CLASS_NAMES
        .iter()
        .zip(&class_dirs)
        .filter(|(_, d)| d.is_none())
        .map(|(n, _)| *n)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "{}: missing class directories: {}",
            root.display(),
            missing.join(", ")
        )));
    }

    let mut images = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        let dir = dir.as_ref().expect("checked above");
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|x| x.to_str())
                        .is_some_and(|x| EXTENSIONS.contains(&x.to_ascii_lowercase().as_str()))
            })
            .collect();
        files.sort();
        for path in files {
            let (w, h, pixels) = decode_gray(&path)?;
            if w != IMAGE_SIZE || h != IMAGE_SIZE {
                return Err(Error::Image {
                    path,
                    message: format!("expected {IMAGE_SIZE}x{IMAGE_SIZE}, found {w}x{h}"),
                });
            }
            images.push(LabeledImage::new(w, h, pixels, label)?);
        }
    }
    Ok(Dataset::new(images, root.display().to_string()))
}

/// Caches a dataset as `img_<idx>` / `label_<idx>` tensor records.
pub fn save_dataset_cache(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut tensors = Vec::with_capacity(dataset.len() * 2);
    for (i, img) in dataset.images().iter().enumerate() {
        let pixels = Tensor::new(
            &[img.height, img.width],
            img.pixels.iter().map(|&p| f32::from(p)).collect(),
        )?;
        tensors.push((format!("img_{i}"), pixels));
        tensors.push((format!("label_{i}"), Tensor::new(&[1], vec![img.label as f32])?));
    }
    write_container(path, tensors.iter().map(|(n, t)| (n.as_str(), t)))
}

pub fn load_dataset_cache(path: &Path) -> Result<Dataset> {
    let records = read_container(path)?;
    if records.len() % 2 != 0 {
        return Err(Error::Data(format!("{}: unpaired image records", path.display())));
    }
    let mut images = Vec::with_capacity(records.len() / 2);
    for (i, pair) in records.chunks_exact(2).enumerate() {
        let (img_name, img) = &pair[0];
        let (label_name, label) = &pair[1];
        if *img_name != format!("img_{i}") || *label_name != format!("label_{i}") {
            return Err(Error::UnknownTensor(format!("{img_name}/{label_name}")));
        }
        let [h, w] = img.shape() else {
            return Err(Error::Data(format!("{img_name}: expected rank-2 image")));
        };
        let pixels = img.data().iter().map(|&v| v.clamp(0.0, 255.0) as u8).collect();
        images.push(LabeledImage::new(*w, *h, pixels, label.data()[0] as usize)?);
    }
    Ok(Dataset::new(images, path.display().to_string()))
}
