use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::{locate, read_file, Dataset, DatasetName, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGE_MAGIC: u32 = 2051;
pub const IDX_LABEL_MAGIC: u32 = 2049;
pub const MNIST_MEAN: f64 = 0.1307;
pub const MNIST_STD: f64 = 0.3081;

/// A parsed IDX file of unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxFile {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("four bytes"))
}

/// Magic number and dimensions from the start of an IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<usize>,
}

/// Reads the big-endian IDX header and checks the magic number against
/// `expected_magic`. `path` only labels errors.
pub fn parse_idx_header(bytes: &[u8], expected_magic: u32, path: &Path) -> Result<IdxHeader> {
    if bytes.len() < 4 {
        return Err(format_err(
            path,
            format!(
                "file of {} bytes is too short for an IDX header",
                bytes.len()
            ),
        ));
    }
    let magic = be_u32(bytes, 0);
    if magic != expected_magic {
        return Err(format_err(
            path,
            format!("magic number {magic} (expected {expected_magic})"),
        ));
    }
    let ndims = (magic & 0xff) as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(format_err(
            path,
            format!("truncated header: {} of {header} bytes", bytes.len()),
        ));
    }
    Ok(IdxHeader {
        magic,
        dims: (0..ndims)
            .map(|i| be_u32(bytes, 4 + 4 * i) as usize)
            .collect(),
    })
}

/// Parses a whole IDX file; the body must hold exactly the bytes the
/// dimensions call for.
pub fn parse_idx(bytes: &[u8], expected_magic: u32, path: &Path) -> Result<IdxFile> {
    let IdxHeader { magic, dims } = parse_idx_header(bytes, expected_magic, path)?;
    let expected: usize = dims.iter().product();
    let body = &bytes[4 + 4 * dims.len()..];
    if body.len() != expected {
        return Err(format_err(
            path,
            format!(
                "dimensions {dims:?} need {expected} data bytes, file has {}",
                body.len()
            ),
        ));
    }
    Ok(IdxFile {
        magic,
        dims,
        data: body.to_vec(),
    })
}

/// Reads `path`, or `path.gz` if only the compressed file exists.
fn read_maybe_gz(path: &Path) -> Result<(PathBuf, Vec<u8>)> {
    let gz = PathBuf::from(format!("{}.gz", path.display()));
    let (used, raw) = if path.exists() || !gz.exists() {
        (path.to_path_buf(), read_file(path)?)
    } else {
        (gz.clone(), read_file(&gz)?)
    };
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| format_err(&used, format!("gzip: {e}")))?;
        Ok((used, out))
    } else {
        Ok((used, raw))
    }
}

fn file_names(split: Split) -> (&'static str, &'static str) {
    match split {
        Split::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        Split::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    }
}

/// Loads one MNIST split from `dir` (or `dir/mnist`). Pixels are scaled to
/// `[0, 1]` and then normalized with the standard MNIST mean and std.
pub fn load_mnist(dir: &Path, split: Split) -> Result<Dataset> {
    let (img_name, lbl_name) = file_names(split);
    let dir = locate(dir, &["mnist", "MNIST"], img_name);
    let (img_path, img_bytes) = read_maybe_gz(&dir.join(img_name))?;
    let images = parse_idx(&img_bytes, IDX_IMAGE_MAGIC, &img_path)?;
    let (lbl_path, lbl_bytes) = read_maybe_gz(&dir.join(lbl_name))?;
    let labels = parse_idx(&lbl_bytes, IDX_LABEL_MAGIC, &lbl_path)?;
    let (n, rows, cols) = (images.dims[0], images.dims[1], images.dims[2]);
    if (rows, cols) != (28, 28) {
        return Err(format_err(
            &img_path,
            format!("images are {rows}×{cols}, expected 28×28"),
        ));
    }
    if labels.dims[0] != n {
        return Err(Error::Consistency(format!(
            "{} has {n} images but {} has {} labels",
            img_path.display(),
            lbl_path.display(),
            labels.dims[0]
        )));
    }
    let pixels = images
        .data
        .iter()
        .map(|&b| (b as f64 / 255.0 - MNIST_MEAN) / MNIST_STD)
        .collect();
    let labels = labels.data.iter().map(|&l| l as usize).collect();
    Dataset::new(
        DatasetName::Mnist,
        split,
        Tensor::new(&[n, 1, 28, 28], pixels)?,
        labels,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(magic: u32, dims: &[u32], data: &[u8]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend(d.to_be_bytes());
        }
        v.extend_from_slice(data);
        v
    }

    #[test]
    fn header_only_parse_ignores_body() {
        let h = parse_idx_header(&idx(2051, &[60000, 28, 28], &[]), 2051, Path::new("i")).unwrap();
        assert_eq!(h.dims, vec![60000, 28, 28]);
    }

    #[test]
    fn header_fields() {
        let f = parse_idx(&idx(2049, &[3], &[7, 8, 9]), 2049, Path::new("l")).unwrap();
        assert_eq!(f.dims, vec![3]);
        assert_eq!(f.data, vec![7, 8, 9]);
    }

    #[test]
    fn wrong_magic_reports_observed_value() {
        let err = parse_idx(&idx(2051, &[1, 1, 1], &[0]), 2049, Path::new("l")).unwrap_err();
        assert!(err.to_string().contains("2051"), "{err}");
    }

    #[test]
    fn truncated_is_a_format_error() {
        let mut b = idx(2049, &[3], &[7, 8, 9]);
        b.pop();
        assert!(matches!(
            parse_idx(&b, 2049, Path::new("l")),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            parse_idx(&b[..6], 2049, Path::new("l")),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            parse_idx(&b[..2], 2049, Path::new("l")),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn loads_gzipped_fixture() {
        use flate2::{write::GzEncoder, Compression};
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..2 * 784).map(|i| (i % 256) as u8).collect();
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&idx(2051, &[2, 28, 28], &pixels)).unwrap();
        std::fs::write(
            dir.path().join("t10k-images-idx3-ubyte.gz"),
            enc.finish().unwrap(),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("t10k-labels-idx1-ubyte"),
            idx(2049, &[2], &[3, 9]),
        )
        .unwrap();
        let d = load_mnist(dir.path(), Split::Test).unwrap();
        assert_eq!(d.labels(), &[3, 9]);
        assert_eq!(d.images().shape(), &[2, 1, 28, 28]);
        assert!((d.images().data()[1] - (1.0 / 255.0 - MNIST_MEAN) / MNIST_STD).abs() < 1e-15);
    }

    #[test]
    fn count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("t10k-images-idx3-ubyte"),
            idx(2051, &[1, 28, 28], &[0; 784]),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("t10k-labels-idx1-ubyte"),
            idx(2049, &[2], &[3, 9]),
        )
        .unwrap();
        assert!(matches!(
            load_mnist(dir.path(), Split::Test),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn missing_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_mnist(dir.path(), Split::Train),
            Err(Error::MissingFile { .. })
        ));
    }
}
