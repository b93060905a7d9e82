//! Datasets: IDX ingestion, class subsets, synthetic blobs, splits and
//! seeded minibatches.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Environment variable naming the directory with the MNIST IDX files.
pub const DATA_DIR_ENV: &str = "RFIM_DATA_DIR";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: wrong magic {found:#010x}, expected {expected:#010x}")]
    WrongMagic { path: String, found: u32, expected: u32 },
    #[error("{path}: truncated, expected {expected} bytes of payload, found {found}")]
    Truncated {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("class {0} not present")]
    MissingClass(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One sample per row, values in `[0, 1]`.
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(DataError::CountMismatch {
                images: features.rows(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_names.len()) {
            return Err(DataError::InvalidArgument(format!(
                "label {bad} outside {} classes",
                class_names.len()
            )));
        }
        Ok(Dataset {
            features,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Number of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes()];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a whole file, transparently gunzipping it when it starts with the
/// gzip magic bytes.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut raw))
        .map_err(io_err(path))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(io_err(path))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Truncated {
            path: path.display().to_string(),
            expected: at + 4,
            found: bytes.len(),
        })
}

/// Parses an IDX file with the given magic, returning dimensions and payload.
fn parse_idx<'a>(bytes: &'a [u8], magic: u32, path: &Path) -> Result<(Vec<usize>, &'a [u8])> {
    let found = be_u32(bytes, 0, path)?;
    if found != magic {
        return Err(DataError::WrongMagic {
            path: path.display().to_string(),
            found,
            expected: magic,
        });
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim)
        .map(|k| be_u32(bytes, 4 + 4 * k, path).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * ndim;
    let expected: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            expected,
            found: payload.len(),
        });
    }
    Ok((dims, &payload[..expected]))
}

/// Loads an IDX image/label pair (optionally gzipped); pixels are scaled by `1/255`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let ib = read_maybe_gz(ip)?;
    let lb = read_maybe_gz(lp)?;
    let (idims, pixels) = parse_idx(&ib, IMAGES_MAGIC, ip)?;
    let (ldims, labels) = parse_idx(&lb, LABELS_MAGIC, lp)?;
    if idims[0] != ldims[0] {
        return Err(DataError::CountMismatch {
            images: idims[0],
            labels: ldims[0],
        });
    }
    let n = idims[0];
    let d = idims[1] * idims[2];
    let features =
        Matrix::from_vec(n, d, pixels.iter().map(|&b| b as f64 / 255.0).collect()).expect("payload length checked");
    let labels: Vec<usize> = labels.iter().map(|&b| b as usize).collect();
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    Dataset::new(features, labels, (0..classes).map(|c| c.to_string()).collect())
}

/// Reads only the sample count from an IDX header.
pub fn idx_count(path: impl AsRef<Path>) -> Result<usize> {
    let p = path.as_ref();
    let bytes = read_maybe_gz(p)?;
    be_u32(&bytes, 4, p).map(|v| v as usize)
}

fn write_maybe_gz(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    let res = if gz {
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::default());
        enc.write_all(bytes)
            .and_then(|_| enc.finish())
            .and_then(|mut w| w.flush())
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(bytes).and_then(|_| w.flush())
    };
    res.map_err(io_err(path))
}

/// Writes `ds` as square images (`rows × cols` must equal the feature
/// dimension). Features are rounded to the nearest multiple of `1/255`;
/// a `.gz` extension compresses the file.
pub fn write_idx(
    ds: &Dataset,
    rows: usize,
    cols: usize,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    if rows * cols != ds.dim() {
        return Err(DataError::InvalidArgument(format!(
            "{rows}x{cols} images for {} features",
            ds.dim()
        )));
    }
    if let Some(&y) = ds.labels.iter().find(|&&y| y > 255) {
        return Err(DataError::InvalidArgument(format!("label {y} does not fit a byte")));
    }
    let n = ds.len() as u32;
    let mut img = Vec::with_capacity(16 + ds.len() * ds.dim());
    for v in [IMAGES_MAGIC, n, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend(
        ds.features
            .as_slice()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    let mut lab = Vec::with_capacity(8 + ds.len());
    for v in [LABELS_MAGIC, n] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend(ds.labels.iter().map(|&y| y as u8));
    write_maybe_gz(images_path.as_ref(), &img)?;
    write_maybe_gz(labels_path.as_ref(), &lab)
}

/// Samples of classes `a` and `b` in original order, relabelled `a→0`, `b→1`.
pub fn binary_subset(ds: &Dataset, a: usize, b: usize) -> Result<Dataset> {
    if a == b {
        return Err(DataError::InvalidArgument(format!("both classes are {a}")));
    }
    let idx: Vec<usize> = (0..ds.len())
        .filter(|&i| ds.labels[i] == a || ds.labels[i] == b)
        .collect();
    for c in [a, b] {
        if !idx.iter().any(|&i| ds.labels[i] == c) {
            return Err(DataError::MissingClass(c));
        }
    }
    let mut sub = ds.select(&idx);
    for y in &mut sub.labels {
        *y = (*y == b) as usize;
    }
    let name = |c: usize| ds.class_names.get(c).cloned().unwrap_or_else(|| c.to_string());
    sub.class_names = vec![name(a), name(b)];
    Ok(sub)
}

/// Two isotropic unit-variance Gaussian clusters centred at `∓separation/2`
/// on the first axis, mapped by `v ↦ 1/2 + v/(separation+8)` and clipped to
/// `[0, 1]`. Labels alternate `0, 1, 0, …`.
pub fn synth_blobs(n: usize, dim: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || !n.is_multiple_of(2) || dim == 0 {
        return Err(DataError::InvalidArgument(format!(
            "n={n} must be even and positive, dim={dim} positive"
        )));
    }
    if !(separation >= 0.0) {
        return Err(DataError::InvalidArgument(format!("separation {separation}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (separation + 8.0);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let features = Matrix::from_fn(n, dim, |i, j| {
        let z: f64 = rng.sample(StandardNormal);
        let centre = if j == 0 {
            if labels[i] == 0 {
                -separation / 2.0
            } else {
                separation / 2.0
            }
        } else {
            0.0
        };
        (0.5 + (centre + z) * scale).clamp(0.0, 1.0)
    });
    Dataset::new(features, labels, vec!["neg".into(), "pos".into()])
}

/// A seeded permutation of `0..n` per `(seed, epoch)` cut into consecutive
/// batches; the last batch may be short.
pub fn minibatches(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Train and test index sets: a seeded shuffle, then a prefix of
/// `round(train_fraction · n)` samples.
pub fn split_indices(n: usize, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0) {
        return Err(DataError::InvalidArgument(format!(
            "train fraction {}",
            spec.train_fraction
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let k = ((spec.train_fraction * n as f64).round() as usize).clamp(1.min(n), n);
    let test = idx.split_off(k);
    Ok((idx, test))
}

pub fn split(ds: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let (tr, te) = split_indices(ds.len(), spec)?;
    Ok((ds.select(&tr), ds.select(&te)))
}

/// `$RFIM_DATA_DIR`, or `data/mnist` at the workspace root.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn locate(dir: &Path, stem: &str) -> Option<PathBuf> {
    [format!("{stem}.gz"), stem.to_string()]
        .into_iter()
        .map(|f| dir.join(f))
        .find(|p| p.is_file())
}

/// Paths of the MNIST training images and labels in `dir`, if present.
pub fn find_mnist(dir: &Path) -> Option<(PathBuf, PathBuf)> {
    Some((
        locate(dir, "train-images-idx3-ubyte")?,
        locate(dir, "train-labels-idx1-ubyte")?,
    ))
}

pub fn load_mnist(dir: &Path) -> Result<Dataset> {
    let (i, l) = find_mnist(dir).ok_or_else(|| DataError::Io {
        path: dir.display().to_string(),
        source: io::Error::new(io::ErrorKind::NotFound, "MNIST training files not found"),
    })?;
    load_idx(i, l)
}
