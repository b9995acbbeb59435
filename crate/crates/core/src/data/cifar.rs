use std::path::Path;

use super::{locate, read_file, Dataset, DatasetName, Split, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One label byte followed by 32×32 R, G and B planes.
pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * 32 * 32;
pub const CIFAR_MEAN: [f64; 3] = [0.4914, 0.4822, 0.4465];
pub const CIFAR_STD: [f64; 3] = [0.2470, 0.2435, 0.2616];

const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const TEST_FILES: [&str; 1] = ["test_batch.bin"];

/// Raw records of one batch file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CifarRecords {
    pub labels: Vec<u8>,
    /// `3072` bytes per record, planar RGB, row-major.
    pub pixels: Vec<u8>,
}

/// Splits a batch file into records. `path` only labels errors.
pub fn parse_cifar_records(bytes: &[u8], path: &Path) -> Result<CifarRecords> {
    if bytes.len() % CIFAR_RECORD_BYTES != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "size {} is not a multiple of the {CIFAR_RECORD_BYTES}-byte record",
                bytes.len()
            ),
        });
    }
    let n = bytes.len() / CIFAR_RECORD_BYTES;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * (CIFAR_RECORD_BYTES - 1));
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        if rec[0] as usize >= NUM_CLASSES {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("record {i} has label {}", rec[0]),
            });
        }
        labels.push(rec[0]);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok(CifarRecords { labels, pixels })
}

/// Loads one CIFAR-10 split from `dir` (or `dir/cifar-10-batches-bin`),
/// normalized per channel.
pub fn load_cifar10(dir: &Path, split: Split) -> Result<Dataset> {
    load_cifar10_limit(dir, split, None)
}

/// As [`load_cifar10`], keeping at most `limit` records.
pub fn load_cifar10_limit(dir: &Path, split: Split, limit: Option<usize>) -> Result<Dataset> {
    let files: &[&str] = match split {
        Split::Train => &TRAIN_FILES,
        Split::Test => &TEST_FILES,
    };
    let dir = locate(dir, &["cifar-10-batches-bin", "cifar10"], files[0]);
    let limit = limit.unwrap_or(usize::MAX);
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for name in files {
        if labels.len() >= limit {
            break;
        }
        let path = dir.join(name);
        let bytes = read_file(&path).map_err(|e| match e {
            Error::MissingFile { path, .. } => Error::MissingFile {
                path,
                message: "CIFAR-10 binary batch file not found (expected the cifar-10-batches-bin layout)".into(),
            },
            other => other,
        })?;
        let rec = parse_cifar_records(&bytes, &path)?;
        let take = rec.labels.len().min(limit - labels.len());
        labels.extend(rec.labels[..take].iter().map(|&l| l as usize));
        pixels.extend_from_slice(&rec.pixels[..take * (CIFAR_RECORD_BYTES - 1)]);
    }
    let plane = 32 * 32;
    let data = pixels
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let c = (i / plane) % 3;
            (b as f64 / 255.0 - CIFAR_MEAN[c]) / CIFAR_STD[c]
        })
        .collect();
    let n = labels.len();
    Dataset::new(
        DatasetName::Cifar10,
        split,
        Tensor::new(&[n, 3, 32, 32], data)?,
        labels,
    )
}
