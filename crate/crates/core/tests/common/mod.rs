//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use actbench::analysis::BoxStats;
use actbench::data::{
    DataSplits, Dataset, DatasetName, Split, DATA_DIR_ENV, MNIST_MEAN, MNIST_STD,
};
use actbench::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn idx_bytes(magic: u32, dims: &[u32], data: &[u8]) -> Vec<u8> {
    let mut v = magic.to_be_bytes().to_vec();
    for d in dims {
        v.extend(d.to_be_bytes());
    }
    v.extend_from_slice(data);
    v
}

/// 28×28 digits-like images: class `k` lights a 6×6 patch whose position
/// depends on `k`, over uniform background noise.
pub fn synthetic_pixels(n: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(n * 784);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k: u8 = rng.random_range(0..10);
        let (r0, c0) = (2 + 13 * (k as usize / 5), 1 + 5 * (k as usize % 5));
        for r in 0..28 {
            for c in 0..28 {
                let on = (r0..r0 + 6).contains(&r) && (c0..c0 + 6).contains(&c);
                let noise: u8 = rng.random_range(0..60);
                pixels.push(if on { 255 - noise } else { noise });
            }
        }
        labels.push(k);
    }
    (pixels, labels)
}

/// Writes a synthetic MNIST directory in the IDX layout.
pub fn write_mnist_fixture(dir: &Path, n_train: usize, n_test: usize) {
    for (prefix, n, seed) in [("train", n_train, 1), ("t10k", n_test, 2)] {
        let (pixels, labels) = synthetic_pixels(n, seed);
        std::fs::write(
            dir.join(format!("{prefix}-images-idx3-ubyte")),
            idx_bytes(2051, &[n as u32, 28, 28], &pixels),
        )
        .unwrap();
        std::fs::write(
            dir.join(format!("{prefix}-labels-idx1-ubyte")),
            idx_bytes(2049, &[n as u32], &labels),
        )
        .unwrap();
    }
}

pub fn synthetic_dataset(n: usize, seed: u64, split: Split) -> Dataset {
    let (pixels, labels) = synthetic_pixels(n, seed);
    let data = pixels
        .iter()
        .map(|&b| (b as f64 / 255.0 - MNIST_MEAN) / MNIST_STD)
        .collect();
    Dataset::new(
        DatasetName::Mnist,
        split,
        Tensor::new(&[n, 1, 28, 28], data).unwrap(),
        labels.into_iter().map(usize::from).collect(),
    )
    .unwrap()
}

pub fn synthetic_splits(n_train: usize, n_test: usize) -> DataSplits {
    DataSplits {
        train: synthetic_dataset(n_train, 1, Split::Train),
        test: synthetic_dataset(n_test, 2, Split::Test),
    }
}

/// Random CIFAR-10 records: label byte then 3072 pixel bytes.
pub fn cifar_records(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n * 3073);
    for _ in 0..n {
        out.push(rng.random_range(0..10u8));
        out.extend((0..3072).map(|_| rng.random::<u8>()));
    }
    out
}

/// Directory holding real datasets: `ACTBENCH_DATA_DIR`, else `data/` at
/// the workspace root.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

/// Type-7 quantile from the textbook definition: position `1 + (n-1)p`
/// among the 1-based order statistics.
pub fn oracle_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let pos = 1.0 + (n - 1) as f64 * p;
    let j = pos.floor() as usize;
    if j >= n {
        return sorted[n - 1];
    }
    let g = pos - j as f64;
    (1.0 - g) * sorted[j - 1] + g * sorted[j]
}

/// Brute-force box plot: quartiles from [`oracle_quantile`], whiskers at
/// the extreme points inside the 1.5·IQR fences.
pub fn box_oracle(values: &[f64]) -> BoxStats {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q1 = oracle_quantile(&sorted, 0.25);
    let q3 = oracle_quantile(&sorted, 0.75);
    let (lo, hi) = (q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1));
    let inside = sorted.iter().copied().filter(|v| *v >= lo && *v <= hi);
    BoxStats {
        min: inside.clone().fold(f64::INFINITY, f64::min).min(q1),
        q1,
        median: oracle_quantile(&sorted, 0.5),
        q3,
        max: inside.fold(f64::NEG_INFINITY, f64::max).max(q3),
        outliers: sorted
            .iter()
            .copied()
            .filter(|v| *v < lo || *v > hi)
            .collect(),
        n: values.len(),
    }
}
