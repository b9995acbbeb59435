//! Dataset loaders (MNIST IDX, CIFAR-10 binary), normalization, batching,
//! augmentation and mixup.

mod augment;
mod cifar;
mod mnist;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use augment::{augment, flip_horizontal, mixup, mixup_with, DEFAULT_MIXUP_ALPHA, DEFAULT_PAD};
pub use cifar::{
    load_cifar10, load_cifar10_limit, parse_cifar_records, CifarRecords, CIFAR_MEAN,
    CIFAR_RECORD_BYTES, CIFAR_STD,
};
pub use mnist::{
    load_mnist, parse_idx, parse_idx_header, IdxFile, IdxHeader, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC,
    MNIST_MEAN, MNIST_STD,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NUM_CLASSES: usize = 10;

/// Environment variable consulted when no data directory is given.
pub const DATA_DIR_ENV: &str = "ACTBENCH_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    Mnist,
    Cifar10,
}

impl DatasetName {
    pub fn name(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Cifar10 => "cifar10",
        }
    }

    /// `(channels, height, width)` of one image.
    pub fn image_shape(self) -> (usize, usize, usize) {
        match self {
            DatasetName::Mnist => (1, 28, 28),
            DatasetName::Cifar10 => (3, 32, 32),
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetName::Mnist),
            "cifar10" => Ok(DatasetName::Cifar10),
            other => Err(Error::Contract(format!(
                "unknown dataset `{other}`; available: mnist, cifar10"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Normalized images `[N, C, H, W]` with labels in `0..10`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: DatasetName,
    pub split: Split,
    images: Tensor,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        name: DatasetName,
        split: Split,
        images: Tensor,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let (c, h, w) = name.image_shape();
        let s = images.shape();
        if s.len() != 4 || s[1..] != [c, h, w] {
            return Err(Error::dim(format!(
                "{name} images must be [N, {c}, {h}, {w}], got {s:?}"
            )));
        }
        if s[0] != labels.len() {
            return Err(Error::Consistency(format!(
                "{} images but {} labels",
                s[0],
                labels.len()
            )));
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= NUM_CLASSES) {
            return Err(Error::Label {
                index,
                label,
                classes: NUM_CLASSES,
            });
        }
        Ok(Self {
            name,
            split,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn image_len(&self) -> usize {
        let (c, h, w) = self.name.image_shape();
        c * h * w
    }

    /// Gathers the examples at `indices` into a batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let n = self.image_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Contract(format!(
                    "index {i} outside dataset of {}",
                    self.len()
                )));
            }
            data.extend_from_slice(&self.images.data()[i * n..(i + 1) * n]);
            labels.push(self.labels[i]);
        }
        let (c, h, w) = self.name.image_shape();
        Batch::new(Tensor::new(&[indices.len(), c, h, w], data)?, labels)
    }

    /// The first `n` examples (all of them if fewer exist).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let (c, h, w) = self.name.image_shape();
        let images = Tensor::new(
            &[n, c, h, w],
            self.images.data()[..n * self.image_len()].to_vec(),
        )
        .expect("prefix of a valid tensor");
        Dataset {
            name: self.name,
            split: self.split,
            images,
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Contiguous batches of at most `batch_size` examples in index order.
    pub fn batches(&self, batch_size: usize) -> impl Iterator<Item = Result<Batch>> + '_ {
        let idx: Vec<usize> = (0..self.len()).collect();
        let chunks: Vec<Vec<usize>> = idx
            .chunks(batch_size.max(1))
            .map(<[usize]>::to_vec)
            .collect();
        chunks.into_iter().map(move |c| self.batch(&c))
    }
}

/// Second label set and weight produced by mixup.
#[derive(Debug, Clone, PartialEq)]
pub struct Mix {
    pub labels_b: Vec<usize>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub mix: Option<Mix>,
}

impl Batch {
    pub fn new(images: Tensor, labels: Vec<usize>) -> Result<Self> {
        let s = images.shape();
        if s.len() != 4 || s[0] == 0 || s[0] != labels.len() {
            return Err(Error::dim(format!(
                "batch needs [B ≥ 1, C, H, W] images and B labels, got {s:?} and {}",
                labels.len()
            )));
        }
        Ok(Self {
            images,
            labels,
            mix: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Train and test splits of one dataset.
#[derive(Debug, Clone)]
pub struct DataSplits {
    pub train: Dataset,
    pub test: Dataset,
}

/// Resolves the data directory: an explicit path wins, then the
/// environment variable.
pub fn resolve_data_dir(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
}

/// First directory among `dir` and `dir/<sub>` that contains `probe`.
pub(crate) fn locate(dir: &Path, subdirs: &[&str], probe: &str) -> PathBuf {
    std::iter::once(dir.to_path_buf())
        .chain(subdirs.iter().map(|s| dir.join(s)))
        .find(|d| d.join(probe).exists() || d.join(format!("{probe}.gz")).exists())
        .unwrap_or_else(|| dir.to_path_buf())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile {
            path: path.to_path_buf(),
            message: "file not found".into(),
        },
        _ => Error::io(path, e),
    })
}

/// Loads both splits of `name` from `dir`; `limit` caps each split's size.
pub fn load_splits(name: DatasetName, dir: &Path, limit: Option<usize>) -> Result<DataSplits> {
    let load = |split| match name {
        DatasetName::Mnist => load_mnist(dir, split).map(|d| match limit {
            Some(n) => d.take(n),
            None => d,
        }),
        DatasetName::Cifar10 => load_cifar10_limit(dir, split, limit),
    };
    Ok(DataSplits {
        train: load(Split::Train)?,
        test: load(Split::Test)?,
    })
}

/// Undoes per-channel normalization, returning pixels in `[0, 1]`.
pub fn denormalize(images: &Tensor, mean: &[f64], std: &[f64]) -> Result<Tensor> {
    let s = images.shape();
    if s.len() != 4 || s[1] != mean.len() || s[1] != std.len() {
        return Err(Error::dim(format!(
            "cannot denormalize {s:?} with {} channel stats",
            mean.len()
        )));
    }
    let plane = s[2] * s[3];
    let data = images
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let c = (i / plane) % s[1];
            v * std[c] + mean[c]
        })
        .collect();
    Tensor::new(s, data)
}
