//! Dataset loaders, the three-spheres generator and mini-batching.
//!
//! Samples are stored as lateral slices: sample `j` of an image dataset is
//! the `ell x 1 x n` slice `A[:, j, :]`. Labels are 1-based.
//!
//! File formats:
//!
//! * IDX (MNIST): big-endian `u32` magic (`0x00000803` images,
//!   `0x00000801` labels), big-endian `u32` item count, for images two more
//!   `u32` (rows, cols), then one unsigned byte per pixel (row-major) or per
//!   label.
//! * CIFAR-10 binary: records of 3073 bytes, a label byte `0..=9` followed
//!   by 1024 red, 1024 green and 1024 blue bytes, each plane row-major
//!   32x32.
//!
//! Random streams: a master seed `s` yields `ChaCha20Rng::seed_from_u64(s)`
//! with `set_stream(k)`, where `k` is [`STREAM_INIT`], [`STREAM_SHUFFLE`]
//! or [`STREAM_DATA`]. Gaussian samples use the ziggurat method of
//! `rand_distr::StandardNormal`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

pub const STREAM_INIT: u64 = 1;
pub const STREAM_SHUFFLE: u64 = 2;
pub const STREAM_DATA: u64 = 3;

/// The generator for one purpose under a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;
const CIFAR_RECORD: usize = 3073;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Per-channel normalization `(x - mean) / std` of pixels scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationSpec {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl NormalizationSpec {
    pub fn new(means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        if means.len() != stds.len() || means.is_empty() {
            return Err(Error::Config(
                "need one mean and one std per channel".into(),
            ));
        }
        if let Some(s) = stds.iter().find(|s| s.is_nan() || **s <= 0.0) {
            return Err(Error::Config(format!(
                "standard deviation must be positive, got {s}"
            )));
        }
        Ok(NormalizationSpec { means, stds })
    }

    pub fn mnist() -> Self {
        NormalizationSpec {
            means: vec![0.1307],
            stds: vec![0.3081],
        }
    }

    pub fn cifar10() -> Self {
        NormalizationSpec {
            means: vec![0.4914, 0.4822, 0.4465],
            stds: vec![0.2023, 0.1994, 0.2010],
        }
    }

    fn channels(&self) -> usize {
        self.means.len()
    }
}

/// How an image becomes a lateral slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImageLayout {
    /// Channel-stacked rows along mode 1, columns along mode 3:
    /// `(channels * height) x m x width`.
    #[default]
    Slices,
    /// Columns along mode 1, channel-stacked rows along mode 3.
    Transposed,
    /// The whole image as one column: `(channels * height * width) x m x 1`.
    Vectorized,
}

impl ImageLayout {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "slices" => Some(ImageLayout::Slices),
            "transposed" => Some(ImageLayout::Transposed),
            "vectorized" => Some(ImageLayout::Vectorized),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ImageLayout::Slices => "slices",
            ImageLayout::Transposed => "transposed",
            ImageLayout::Vectorized => "vectorized",
        }
    }
}

/// Geometry of the images a dataset was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageFormat {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub layout: ImageLayout,
}

impl ImageFormat {
    /// `(ell, n)` of one sample.
    pub fn slice_dims(&self) -> (usize, usize) {
        let rows = self.channels * self.height;
        match self.layout {
            ImageLayout::Slices => (rows, self.width),
            ImageLayout::Transposed => (self.width, rows),
            ImageLayout::Vectorized => (rows * self.width, 1),
        }
    }

    /// `(i, k)` position of pixel `(c, r, col)` inside a lateral slice.
    fn position(&self, c: usize, r: usize, col: usize) -> (usize, usize) {
        let row = c * self.height + r;
        match self.layout {
            ImageLayout::Slices => (row, col),
            ImageLayout::Transposed => (col, row),
            ImageLayout::Vectorized => (row * self.width + col, 0),
        }
    }

    fn pixels(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Builds the sample tensor from raw bytes, `pixels()` per image in
    /// channel, row, column order.
    fn tensor(&self, raw: &[u8], count: usize, norm: &NormalizationSpec) -> Tensor3 {
        let (ell, n) = self.slice_dims();
        let mut out = Tensor3::zeros(ell, count, n);
        let plane = self.height * self.width;
        for j in 0..count {
            let img = &raw[j * self.pixels()..(j + 1) * self.pixels()];
            for c in 0..self.channels {
                let (mean, std) = (norm.means[c], norm.stds[c]);
                for r in 0..self.height {
                    for col in 0..self.width {
                        let v = img[c * plane + r * self.width + col] as f64 / 255.0;
                        let (i, k) = self.position(c, r, col);
                        out.set(i, j, k, (v - mean) / std);
                    }
                }
            }
        }
        out
    }
}

/// Samples as lateral slices with 1-based labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Tensor3,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: Split,
    pub image: Option<ImageFormat>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The samples at `indices`, in that order.
    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch {
            samples: self.samples.select_lateral(indices),
            labels: indices.iter().map(|&j| self.labels[j]).collect(),
        }
    }

    /// Number of samples per class, index 0 for class 1.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l - 1] += 1;
        }
        counts
    }
}

/// A mini-batch: `m` lateral slices and their labels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub samples: Tensor3,
    pub labels: Vec<usize>,
}

/// Options for [`load_mnist`].
#[derive(Debug, Clone)]
pub struct MnistOptions {
    pub layout: ImageLayout,
    pub normalization: NormalizationSpec,
    /// Keep only the first `limit` samples.
    pub limit: Option<usize>,
}

impl Default for MnistOptions {
    fn default() -> Self {
        MnistOptions {
            layout: ImageLayout::Slices,
            normalization: NormalizationSpec::mnist(),
            limit: None,
        }
    }
}

/// Standard file names of one MNIST split inside `dir`.
pub fn mnist_files(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    (
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::TruncatedFile {
            path: path.to_path_buf(),
            detail: format!("header ends at byte {}", bytes.len()),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found,
            expected,
        });
    }
    Ok(())
}

/// Parses an IDX image file: `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = read(path)?;
    check_magic(&bytes, IDX_IMAGES, path)?;
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let need = 16 + count * rows * cols;
    if bytes.len() < need {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            detail: format!("{} bytes, header promises {need}", bytes.len()),
        });
    }
    Ok((count, rows, cols, bytes[16..need].to_vec()))
}

/// Parses an IDX label file.
pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read(path)?;
    check_magic(&bytes, IDX_LABELS, path)?;
    let count = be_u32(&bytes, 4, path)? as usize;
    if bytes.len() < 8 + count {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            detail: format!("{} bytes, header promises {}", bytes.len(), 8 + count),
        });
    }
    Ok(bytes[8..8 + count].to_vec())
}

/// Loads an MNIST split from its IDX image and label files.
pub fn load_mnist(images: &Path, labels: &Path, opts: &MnistOptions) -> Result<Dataset> {
    let (count, rows, cols, pixels) = read_idx_images(images)?;
    let raw_labels = read_idx_labels(labels)?;
    if raw_labels.len() != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: raw_labels.len(),
        });
    }
    if opts.normalization.channels() != 1 {
        return Err(Error::Config(
            "MNIST normalization needs exactly one channel".into(),
        ));
    }
    let m = opts.limit.map_or(count, |l| l.min(count));
    if m == 0 {
        return Err(Error::Config(format!(
            "{}: no samples to load",
            images.display()
        )));
    }
    let format = ImageFormat {
        channels: 1,
        height: rows,
        width: cols,
        layout: opts.layout,
    };
    let mut labels = Vec::with_capacity(m);
    for &l in &raw_labels[..m] {
        if l > 9 {
            return Err(Error::LabelOutOfRange {
                label: l as usize + 1,
                classes: 10,
            });
        }
        labels.push(l as usize + 1);
    }
    Ok(Dataset {
        samples: format.tensor(&pixels, m, &opts.normalization),
        labels,
        classes: 10,
        split: Split::Train,
        image: Some(format),
    })
}

/// Options for [`load_cifar10`].
#[derive(Debug, Clone)]
pub struct CifarOptions {
    pub layout: ImageLayout,
    pub normalization: NormalizationSpec,
    pub limit: Option<usize>,
}

impl Default for CifarOptions {
    fn default() -> Self {
        CifarOptions {
            layout: ImageLayout::Slices,
            normalization: NormalizationSpec::cifar10(),
            limit: None,
        }
    }
}

/// Standard file names of one CIFAR-10 split inside `dir`.
pub fn cifar10_files(dir: &Path, split: Split) -> Vec<PathBuf> {
    match split {
        Split::Train => (1..=5)
            .map(|i| dir.join(format!("data_batch_{i}.bin")))
            .collect(),
        Split::Test => vec![dir.join("test_batch.bin")],
    }
}

/// Loads and concatenates CIFAR-10 binary batch files, stopping once
/// `limit` records have been read.
pub fn load_cifar10(paths: &[PathBuf], opts: &CifarOptions) -> Result<Dataset> {
    if opts.normalization.channels() != 3 {
        return Err(Error::Config(
            "CIFAR-10 normalization needs three channels".into(),
        ));
    }
    let limit = opts.limit.unwrap_or(usize::MAX);
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        if labels.len() >= limit {
            break;
        }
        let bytes = read(path)?;
        if bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::TruncatedRecord {
                path: path.clone(),
                len: bytes.len(),
                record: CIFAR_RECORD,
            });
        }
        for rec in bytes.chunks_exact(CIFAR_RECORD) {
            if labels.len() >= limit {
                break;
            }
            if rec[0] > 9 {
                return Err(Error::LabelOutOfRange {
                    label: rec[0] as usize + 1,
                    classes: 10,
                });
            }
            labels.push(rec[0] as usize + 1);
            pixels.extend_from_slice(&rec[1..]);
        }
    }
    if labels.is_empty() {
        return Err(Error::Config("no CIFAR-10 records to load".into()));
    }
    let format = ImageFormat {
        channels: 3,
        height: 32,
        width: 32,
        layout: opts.layout,
    };
    Ok(Dataset {
        samples: format.tensor(&pixels, labels.len(), &opts.normalization),
        labels,
        classes: 10,
        split: Split::Train,
        image: Some(format),
    })
}

/// Recovers pixel intensities in `[0, 1]`, one vector per sample in channel,
/// row, column order.
pub fn denormalize(d: &Dataset, norm: &NormalizationSpec) -> Result<Vec<Vec<f64>>> {
    let f = d
        .image
        .ok_or_else(|| Error::Config("dataset has no image format".into()))?;
    if norm.channels() != f.channels {
        return Err(Error::Config(
            "normalization channel count does not match".into(),
        ));
    }
    let mut out = Vec::with_capacity(d.len());
    for j in 0..d.len() {
        let mut img = Vec::with_capacity(f.pixels());
        for c in 0..f.channels {
            for r in 0..f.height {
                for col in 0..f.width {
                    let (i, k) = f.position(c, r, col);
                    img.push(d.samples.get(i, j, k) * norm.stds[c] + norm.means[c]);
                }
            }
        }
        out.push(img);
    }
    Ok(out)
}

/// Class of a point in the three-spheres problem: 1 inside radius 3.5,
/// 2 inside radius 5.5, 3 outside.
pub fn sphere_class(p: [f64; 3]) -> usize {
    let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    if r < 3.5 {
        1
    } else if r < 5.5 {
        2
    } else {
        3
    }
}

/// Standard class counts of the three-spheres problem.
pub const SPHERE_COUNTS: [usize; 3] = [317, 466, 417];

/// Points in R^3 with independent `N(0, 3^2)` coordinates, labeled by
/// [`sphere_class`], drawn until every class has exactly its requested
/// count (surplus points of a full class are discarded). Stored as
/// `1 x m x 3` tubes in draw order. Uses stream [`STREAM_DATA`] of `seed`.
pub fn gen_spheres(seed: u64, counts: [usize; 3]) -> Dataset {
    let mut rng = stream_rng(seed, STREAM_DATA);
    let total: usize = counts.iter().sum();
    let mut have = [0usize; 3];
    let mut points = Vec::with_capacity(3 * total);
    let mut labels = Vec::with_capacity(total);
    while labels.len() < total {
        let p: [f64; 3] = std::array::from_fn(|_| {
            let z: f64 = rng.sample(StandardNormal);
            3.0 * z
        });
        let c = sphere_class(p);
        if have[c - 1] < counts[c - 1] {
            have[c - 1] += 1;
            points.extend_from_slice(&p);
            labels.push(c);
        }
    }
    let samples = if total == 0 {
        Tensor3::zeros(1, 1, 3)
    } else {
        Tensor3::from_vec((1, total, 3), points).expect("sizes agree")
    };
    Dataset {
        samples,
        labels,
        classes: 3,
        split: Split::Train,
        image: None,
    }
}

/// A shuffled partition of `0..m` into batches of `batch_size`; the last
/// batch keeps the remainder.
pub fn batch_indices(m: usize, batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// Mini-batches of `d` in an order fixed by `seed` (stream
/// [`STREAM_SHUFFLE`]).
pub fn batches(d: &Dataset, batch_size: usize, seed: u64) -> impl Iterator<Item = Batch> + '_ {
    let mut rng = stream_rng(seed, STREAM_SHUFFLE);
    batch_indices(d.len(), batch_size, &mut rng)
        .into_iter()
        .map(move |idx| d.batch(&idx))
}
