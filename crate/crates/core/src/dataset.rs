//! MNIST IDX parsing, labeled datasets and deterministic seeded splits.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::image::{GrayImage, ImageError};
use crate::imageproc::resize_area;
use crate::matrix::Matrix;
use crate::prng::SplitMix64;
use crate::Digit;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Side of the reduced images used by the KNN experiment.
pub const SMALL_SIDE: usize = 8;
/// Largest value of a quantized 8×8 pixel.
pub const SMALL_LEVELS: u32 = 16;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("wrong IDX magic 0x{found:08x}, expected 0x{expected:08x}")]
    WrongMagic { expected: u32, found: u32 },
    #[error("truncated IDX file: header promises {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("label {0} is not a digit")]
    LabelOutOfRange(u8),
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("images must be square and equally sized")]
    InconsistentImages,
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("split would leave the {0} part empty")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Image(#[from] ImageError),
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32, DatasetError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(DatasetError::TruncatedFile {
            expected: offset + 4,
            actual: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), DatasetError> {
    let found = read_u32_be(bytes, 0)?;
    if found != expected {
        return Err(DatasetError::WrongMagic { expected, found });
    }
    Ok(())
}

/// Parses an IDX3 image file. The length must match the header exactly.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<GrayImage>, DatasetError> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = read_u32_be(bytes, 4)? as usize;
    let rows = read_u32_be(bytes, 8)? as usize;
    let cols = read_u32_be(bytes, 12)? as usize;
    let size = rows * cols;
    let expected = 16 + count * size;
    if bytes.len() != expected {
        return Err(DatasetError::TruncatedFile {
            expected,
            actual: bytes.len(),
        });
    }
    bytes[16..]
        .chunks_exact(size.max(1))
        .take(count)
        .map(|px| GrayImage::new(cols, rows, px.to_vec()).map_err(DatasetError::from))
        .collect()
}

/// Parses an IDX1 label file; every label must be a digit.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<Digit>, DatasetError> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = read_u32_be(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() != expected {
        return Err(DatasetError::TruncatedFile {
            expected,
            actual: bytes.len(),
        });
    }
    let labels = bytes[8..].to_vec();
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(DatasetError::LabelOutOfRange(bad));
    }
    Ok(labels)
}

/// Encodes images in IDX3 layout. All images must share dimensions.
pub fn encode_idx_images(images: &[GrayImage]) -> Vec<u8> {
    let (rows, cols) = images.first().map_or((0, 0), |i| (i.height(), i.width()));
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        assert_eq!(
            (img.height(), img.width()),
            (rows, cols),
            "mixed image sizes"
        );
        out.extend_from_slice(img.pixels());
    }
    out
}

pub fn encode_idx_labels(labels: &[Digit]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>, DatasetError> {
    fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Which half of the MNIST distribution to read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MnistPart {
    Train,
    Test,
}

/// Loads the images and labels of one MNIST part from a directory holding the
/// four standard (uncompressed) IDX files.
pub fn load_mnist(
    dir: impl AsRef<Path>,
    part: MnistPart,
) -> Result<(Vec<GrayImage>, Vec<Digit>), DatasetError> {
    let dir = dir.as_ref();
    let (img_name, lbl_name) = match part {
        MnistPart::Train => (TRAIN_IMAGES, TRAIN_LABELS),
        MnistPart::Test => (TEST_IMAGES, TEST_LABELS),
    };
    let images = parse_idx_images(&read_file(&dir.join(img_name))?)?;
    let labels = parse_idx_labels(&read_file(&dir.join(lbl_name))?)?;
    if images.len() != labels.len() {
        return Err(DatasetError::LengthMismatch {
            features: images.len(),
            labels: labels.len(),
        });
    }
    Ok((images, labels))
}

/// The first `limit` indices of `0..n` after a seeded Fisher–Yates shuffle.
pub fn seeded_subset(n: usize, limit: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut idx);
    idx.truncate(limit.min(n));
    idx
}

/// Feature matrix with aligned digit labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<Digit>,
    image_side: usize,
}

impl LabeledDataset {
    pub fn new(
        features: Matrix,
        labels: Vec<Digit>,
        image_side: usize,
    ) -> Result<Self, DatasetError> {
        if features.rows() != labels.len() {
            return Err(DatasetError::LengthMismatch {
                features: features.rows(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
            return Err(DatasetError::LabelOutOfRange(bad));
        }
        Ok(Self {
            features,
            labels,
            image_side,
        })
    }

    /// Raw pixel features (one row per image, row-major pixels as `f64`).
    pub fn from_images(images: &[GrayImage], labels: Vec<Digit>) -> Result<Self, DatasetError> {
        let side = images.first().map_or(0, |i| i.width());
        if images
            .iter()
            .any(|i| i.width() != side || i.height() != side)
        {
            return Err(DatasetError::InconsistentImages);
        }
        let rows = images
            .iter()
            .map(|img| img.pixels().iter().map(|&p| p as f64).collect::<Vec<_>>());
        let features = if images.is_empty() {
            Matrix::zeros(0, 0)
        } else {
            Matrix::from_rows(rows)
        };
        Self::new(features, labels, side)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[Digit] {
        &self.labels
    }

    pub fn image_side(&self) -> usize {
        self.image_side
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            image_side: self.image_side,
        }
    }

    /// Number of samples per digit.
    pub fn class_counts(&self) -> [usize; 10] {
        let mut counts = [0; 10];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// Fractions and seed of a train/validation/test split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    /// 25 % test, then 10 % of the remainder for validation.
    fn default() -> Self {
        Self {
            test_fraction: 0.25,
            val_fraction: 0.10,
            seed: 42,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let (t, v) = (self.test_fraction, self.val_fraction);
        if !(t > 0.0 && t < 1.0) {
            return Err(DatasetError::InvalidSplit(format!(
                "test fraction {t} not in (0, 1)"
            )));
        }
        if !(0.0..1.0).contains(&v) {
            return Err(DatasetError::InvalidSplit(format!(
                "validation fraction {v} not in [0, 1)"
            )));
        }
        if t + v * (1.0 - t) >= 1.0 {
            return Err(DatasetError::InvalidSplit(
                "fractions leave no training data".into(),
            ));
        }
        Ok(())
    }
}

/// `⌈n·fraction⌉`, ignoring binary representation noise just above an integer
/// (e.g. 70·0.1 = 7.000000000000001 counts as 7).
pub fn ceil_count(n: usize, fraction: f64) -> usize {
    let x = n as f64 * fraction;
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Index partition produced by [`split_indices`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n`, takes the first ⌈n·test⌉ as the test part, re-shuffles the
/// remainder and takes the first ⌈m·val⌉ of it for validation.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<SplitIndices, DatasetError> {
    spec.validate()?;
    if n < 4 {
        return Err(DatasetError::InvalidSplit(format!(
            "need at least 4 samples, got {n}"
        )));
    }
    let mut rng = SplitMix64::new(spec.seed);
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let n_test = ceil_count(n, spec.test_fraction);
    if n_test >= n {
        return Err(DatasetError::EmptySplit("train"));
    }
    let mut rest = idx.split_off(n_test);
    let test = idx;
    rng.shuffle(&mut rest);
    let n_val = ceil_count(rest.len(), spec.val_fraction);
    if n_val >= rest.len() {
        return Err(DatasetError::EmptySplit("train"));
    }
    let train = rest.split_off(n_val);
    Ok(SplitIndices {
        train,
        val: rest,
        test,
    })
}

/// Deterministic train/validation/test split of a dataset.
pub fn split(
    data: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset), DatasetError> {
    let parts = split_indices(data.len(), spec)?;
    Ok((
        data.subset(&parts.train),
        data.subset(&parts.val),
        data.subset(&parts.test),
    ))
}

/// Reduces a 28×28 digit to 8×8 by area averaging, then quantizes each pixel
/// to `round(p·16/255)` in `0..=16`.
pub fn downsample_to_8x8(img: &GrayImage) -> Result<GrayImage, DatasetError> {
    img.ensure_dims(28, 28)?;
    let small = resize_area(img, SMALL_SIDE, SMALL_SIDE);
    let levels = SMALL_LEVELS;
    let px = small
        .pixels()
        .iter()
        .map(|&p| ((2 * p as u32 * levels + 255) / 510).min(levels) as u8)
        .collect();
    Ok(GrayImage::new(SMALL_SIDE, SMALL_SIDE, px)?)
}
