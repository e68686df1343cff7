//! In-memory classification datasets: IDX (MNIST) ingestion, synthetic
//! Gaussian blobs and seeded train/test subsampling.
//!
//! IDX files are read uncompressed; gunzip the standard MNIST distribution
//! before pointing the loaders at it.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Row-major feature matrix with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if dim == 0 || num_classes == 0 {
            return Err(Error::InvalidConfig(
                "feature dimension and class count must be positive".into(),
            ));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Consistency(format!(
                "{} feature values for {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Consistency(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Consistency("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Copies the given rows, in order, into a new dataset.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            labels,
            dim: self.dim,
            num_classes: self.num_classes,
        }
    }
}

/// Dense matrix of scaled image pixels, one flattened image per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Length {
            needed: offset + 4,
            available: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::Format {
            offset: 0,
            expected,
            found,
        });
    }
    Ok(())
}

/// Parses an IDX image blob into an `n x (rows * cols)` matrix scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<ImageMatrix> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    let h = read_u32(bytes, 8)? as usize;
    let w = read_u32(bytes, 12)? as usize;
    let cols = h * w;
    let needed = 16 + n * cols;
    let pixels = bytes.get(16..needed).ok_or(Error::Length {
        needed,
        available: bytes.len(),
    })?;
    Ok(ImageMatrix {
        rows: n,
        cols,
        data: pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    let needed = 8 + n;
    let labels = bytes.get(8..needed).ok_or(Error::Length {
        needed,
        available: bytes.len(),
    })?;
    Ok(labels.iter().map(|&l| usize::from(l)).collect())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<ImageMatrix> {
    parse_idx_images(&read_file(path.as_ref())?)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    parse_idx_labels(&read_file(path.as_ref())?)
}

/// Loads a paired image/label file set as a 10-class dataset.
pub fn load_idx_dataset(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let images = load_idx_images(images)?;
    let labels = load_idx_labels(labels)?;
    if images.rows != labels.len() {
        return Err(Error::Consistency(format!(
            "{} images but {} labels",
            images.rows,
            labels.len()
        )));
    }
    let num_classes = labels.iter().max().map_or(10, |&m| (m + 1).max(10));
    Dataset::new(images.data, labels, images.cols.max(1), num_classes)
}

/// Loads `train-images-idx3-ubyte` / `train-labels-idx1-ubyte` from `dir`.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    load_idx_dataset(
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
    )
}

/// Encodes features in `[0, 1]` as an IDX image blob of `height x width` images.
pub fn encode_idx_images(data: &Dataset, height: usize, width: usize) -> Result<Vec<u8>> {
    if height * width != data.dim() {
        return Err(Error::InvalidInput(format!(
            "{height}x{width} images do not match feature width {}",
            data.dim()
        )));
    }
    let mut out = Vec::with_capacity(16 + data.features().len());
    for v in [
        IDX_IMAGES_MAGIC,
        data.len() as u32,
        height as u32,
        width as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for &v in data.features() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidInput(format!(
                "pixel value {v} outside [0, 1]"
            )));
        }
        out.push((v * 255.0).round() as u8);
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        let byte = u8::try_from(l)
            .map_err(|_| Error::InvalidInput(format!("label {l} exceeds one byte")))?;
        out.push(byte);
    }
    Ok(out)
}

/// Writes `data` as an image file and a label file.
pub fn write_idx_dataset(
    data: &Dataset,
    height: usize,
    width: usize,
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
) -> Result<()> {
    let (images, labels) = (images.as_ref(), labels.as_ref());
    fs::write(images, encode_idx_images(data, height, width)?).map_err(|e| Error::io(images, e))?;
    fs::write(labels, encode_idx_labels(data.labels())?).map_err(|e| Error::io(labels, e))?;
    Ok(())
}

/// Unit-variance Gaussian blobs around `num_classes` distinct centers at
/// distance `separation` from the origin.
///
/// While `num_classes <= 2 * d` the centers are `+-separation * e_j`, which
/// keeps them pairwise at least `sqrt(2) * separation` apart; beyond that the
/// directions are drawn uniformly from the sphere.
pub fn synthetic_blobs(
    n_per_class: usize,
    num_classes: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if d < 1 {
        return Err(Error::InvalidConfig(
            "blob dimension must be at least 1".into(),
        ));
    }
    if n_per_class == 0 || num_classes == 0 {
        return Err(Error::InvalidConfig("blob counts must be positive".into()));
    }
    if !separation.is_finite() {
        return Err(Error::InvalidConfig("separation must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|c| {
            if num_classes <= 2 * d {
                let mut v = vec![0.0; d];
                v[c / 2] = if c % 2 == 0 { separation } else { -separation };
                v
            } else if d == 1 {
                vec![separation * c as f64]
            } else {
                let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let n = v
                    .iter()
                    .map(|x| x * x)
                    .sum::<f64>()
                    .sqrt()
                    .max(f64::MIN_POSITIVE);
                v.iter_mut().for_each(|x| *x *= separation / n);
                v
            }
        })
        .collect();

    let mut features = Vec::with_capacity(n_per_class * num_classes * d);
    let mut labels = Vec::with_capacity(n_per_class * num_classes);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            features.extend(center.iter().map(|m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + z
            }));
            labels.push(c);
        }
    }
    Dataset::new(features, labels, d, num_classes)
}

/// Disjoint seeded train/test samples drawn without replacement.
pub fn subset(
    data: &Dataset,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if n_train + n_test > data.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot draw {n_train} + {n_test} samples from {}",
            data.len()
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((
        data.select(&idx[..n_train]),
        data.select(&idx[n_train..n_train + n_test]),
    ))
}
