//! Dataset loading: IDX (optionally gzip-compressed), CIFAR-10 binary and a
//! seeded synthetic generator.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use walshnet_core::Tensor4;

use crate::error::{Result, TrainError};
use crate::model::InputShape;
use crate::real::Real;

/// Bytes of one CIFAR-10 record: a label followed by 32x32x3 planar pixels.
pub const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;
const IDX_UBYTE: u8 = 0x08;

/// Labeled images with pixels in `[0, 1]`, stored item-major in NHWC order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub shape: InputShape,
    pub classes: usize,
    pub pixels: Vec<f32>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(shape: InputShape, classes: usize, pixels: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        let item = shape.dims(1).item_len();
        if pixels.len() != labels.len() * item {
            return Err(TrainError::Model(format!(
                "{} pixels do not hold {} items of {item}",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(TrainError::Model(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Self {
            shape,
            classes,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn item_len(&self) -> usize {
        self.shape.dims(1).item_len()
    }

    pub fn item(&self, i: usize) -> &[f32] {
        let n = self.item_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Gathers the given items into a batch tensor and label list.
    pub fn batch<S: Real>(&self, indices: &[usize]) -> (Tensor4<S>, Vec<usize>) {
        let n = self.item_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend(self.item(i).iter().map(|&v| S::from_f64_lossy(v as f64)));
        }
        let x = Tensor4::from_vec(self.shape.dims(indices.len()), data).expect("batch length matches dims");
        (x, indices.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut pixels = Vec::with_capacity(indices.len() * self.item_len());
        for &i in indices {
            pixels.extend_from_slice(self.item(i));
        }
        Self {
            shape: self.shape,
            classes: self.classes,
            pixels,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Seeded split: a permutation of all items whose first `test` entries
    /// form the test set and whose next `train` entries (or all remaining)
    /// form the training set.
    pub fn split(&self, train: Option<usize>, test: usize, seed: u64) -> Result<(Self, Self)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let train = train.unwrap_or(self.len().saturating_sub(test));
        if train == 0 || test + train > self.len() {
            return Err(TrainError::Config(format!(
                "cannot split {} items into {train} train and {test} test",
                self.len()
            )));
        }
        Ok((self.subset(&order[test..test + train]), self.subset(&order[..test])))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Reads a whole file, inflating it when it carries the gzip magic.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| TrainError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| TrainError::format(path, format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// An unsigned-byte IDX array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an IDX file: two zero bytes, a type byte (only unsigned bytes are
/// accepted), the rank, big-endian `u32` dimensions, then the payload.
pub fn parse_idx(bytes: &[u8], path: &Path) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(TrainError::Truncated {
            path: path.to_path_buf(),
            expected: 4,
            actual: bytes.len(),
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != IDX_UBYTE {
        let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
        return Err(TrainError::format(path, format!("unsupported IDX magic {magic:#010x}")));
    }
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(TrainError::format(path, "IDX rank 0"));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(TrainError::Truncated {
            path: path.to_path_buf(),
            expected: header,
            actual: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| TrainError::format(path, "IDX dimensions overflow"))?;
    let expected = header + payload;
    if bytes.len() < expected {
        return Err(TrainError::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(TrainError::format(
            path,
            format!("{} trailing bytes after IDX payload", bytes.len() - expected),
        ));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    parse_idx(&read_maybe_gz(path)?, path)
}

/// Loads an IDX image file of rank 3 (or rank 4 with trailing channels) and
/// a rank-1 label file.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = read_idx(images)?;
    let lab = read_idx(labels)?;
    let (n, w, h, c) = match img.dims.as_slice() {
        &[n, w, h] => (n, w, h, 1),
        &[n, w, h, c] => (n, w, h, c),
        other => return Err(TrainError::format(images, format!("expected rank 3 or 4 images, got {other:?}"))),
    };
    if lab.dims.len() != 1 || lab.dims[0] != n {
        return Err(TrainError::format(
            labels,
            format!("label dims {:?} do not match {n} images", lab.dims),
        ));
    }
    let labels_vec: Vec<usize> = lab.data.iter().map(|&l| l as usize).collect();
    let classes = labels_vec.iter().max().map_or(0, |&m| m + 1).max(2);
    let pixels = img.data.iter().map(|&p| p as f32 / 255.0).collect();
    Dataset::new(
        InputShape {
            width: w,
            height: h,
            channels: c,
        },
        classes,
        pixels,
        labels_vec,
    )
}

/// Parses CIFAR-10 binary records, converting planar RGB to NHWC.
pub fn parse_cifar(bytes: &[u8], path: &Path) -> Result<(Vec<f32>, Vec<usize>)> {
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
        return Err(TrainError::Truncated {
            path: path.to_path_buf(),
            expected: bytes.len().div_ceil(CIFAR_RECORD).max(1) * CIFAR_RECORD,
            actual: bytes.len(),
        });
    }
    let count = bytes.len() / CIFAR_RECORD;
    let mut pixels = Vec::with_capacity(count * 3072);
    let mut labels = Vec::with_capacity(count);
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        let label = rec[0] as usize;
        if label >= 10 {
            return Err(TrainError::format(path, format!("CIFAR label {label} out of range")));
        }
        labels.push(label);
        let planes = &rec[1..];
        for p in 0..1024 {
            for ch in 0..3 {
                pixels.push(planes[ch * 1024 + p] as f32 / 255.0);
            }
        }
    }
    Ok((pixels, labels))
}

pub fn load_cifar(paths: &[PathBuf]) -> Result<Dataset> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let (p, l) = parse_cifar(&read_maybe_gz(path)?, path)?;
        pixels.extend(p);
        labels.extend(l);
    }
    Dataset::new(
        InputShape {
            width: 32,
            height: 32,
            channels: 3,
        },
        10,
        pixels,
        labels,
    )
}

/// Class prototypes with Gaussian pixel noise, clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub count: usize,
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

pub fn synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.classes < 2 || cfg.count == 0 || cfg.noise.is_nan() || cfg.noise < 0.0 {
        return Err(TrainError::Config(format!("invalid synthetic dataset {cfg:?}")));
    }
    let shape = InputShape {
        width: cfg.width,
        height: cfg.height,
        channels: cfg.channels,
    };
    let item = shape.dims(1).item_len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let prototypes: Vec<Vec<f32>> = (0..cfg.classes)
        .map(|_| (0..item).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let normal = Normal::new(0.0, cfg.noise).map_err(|e| TrainError::Config(e.to_string()))?;
    let mut pixels = Vec::with_capacity(cfg.count * item);
    let mut labels = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let label = i % cfg.classes;
        labels.push(label);
        for &p in &prototypes[label] {
            pixels.push((p + normal.sample(&mut rng) as f32).clamp(0.0, 1.0));
        }
    }
    Dataset::new(shape, cfg.classes, pixels, labels)
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "kebab-case")]
pub enum DatasetSource {
    Idx { images: PathBuf, labels: PathBuf },
    CifarBinary { paths: Vec<PathBuf> },
    Synthetic(SyntheticConfig),
}

fn default_test() -> usize {
    1000
}

/// Dataset source plus the seeded train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(flatten)]
    pub source: DatasetSource,
    /// Training items; all items not in the test set when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<usize>,
    #[serde(default = "default_test")]
    pub test: usize,
    #[serde(default)]
    pub split_seed: u64,
}

impl DatasetConfig {
    /// Makes relative paths relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.source {
            DatasetSource::Idx { images, labels } => {
                fix(images);
                fix(labels);
            }
            DatasetSource::CifarBinary { paths } => paths.iter_mut().for_each(fix),
            DatasetSource::Synthetic(_) => {}
        }
    }

    pub fn load_all(&self) -> Result<Dataset> {
        match &self.source {
            DatasetSource::Idx { images, labels } => load_idx(images, labels),
            DatasetSource::CifarBinary { paths } => load_cifar(paths),
            DatasetSource::Synthetic(cfg) => synthetic(cfg),
        }
    }

    /// Loads and splits into `(train, test)`.
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        self.load_all()?.split(self.train, self.test, self.split_seed)
    }
}

/// Checks that a dataset feeds a model's input.
pub fn check_compatible(data: &Dataset, input: InputShape, classes: usize) -> Result<()> {
    if data.shape != input {
        return Err(TrainError::Config(format!(
            "dataset items are {}x{}x{} but the model expects {}x{}x{}",
            data.shape.width, data.shape.height, data.shape.channels, input.width, input.height, input.channels
        )));
    }
    if data.classes > classes {
        return Err(TrainError::Config(format!(
            "dataset has {} classes but the model head has {classes}",
            data.classes
        )));
    }
    Ok(())
}
