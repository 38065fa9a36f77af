//! Labeled image batches for scoring.
//!
//! Three sources feed the scorer: CIFAR-10 binary files parsed bit-exactly,
//! a small self-describing tensor container for exports from other datasets,
//! and synthetic Gaussian fixtures for desk-scale runs. All loaders are pure
//! functions of their path and seed, and every batch is immutable once built.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Byte length of one CIFAR-10 binary record: 1 label byte + 3*32*32 pixels.
pub const CIFAR10_RECORD_BYTES: usize = 3073;

/// Class count of CIFAR-10.
pub const CIFAR10_CLASSES: usize = 10;

/// Magic bytes opening the tensor container format.
pub const CONTAINER_MAGIC: &[u8; 4] = b"EPEB";

/// Gap between consecutive per-class means in synthetic batches.
pub const CLASS_MEAN_OFFSET: f64 = 1.0;

/// Where a batch came from.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Parsed from a dataset file on disk.
    Real,
    /// Drawn from the synthetic Gaussian generator.
    Synthetic,
}

/// A batch of images with one class id per image.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    images: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    provenance: Provenance,
}

impl LabeledBatch {
    /// Validates that `images` is a 4-d batch, that there is one label per
    /// image, and that every label lies in `[0, num_classes)`.
    pub fn new(
        images: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        let (n, _, _, _) = images.dims4()?;
        if labels.len() != n {
            return Err(Error::Contract(format!(
                "{} labels for a batch of {n} images",
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::Contract("batch needs at least one class".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Contract(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Self { images, labels, num_classes, provenance })
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Upper bound on label values, not the count of labels present.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn into_parts(self) -> (Tensor, Vec<usize>) {
        (self.images, self.labels)
    }
}

/// Per-channel standardization constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// The widely published CIFAR-10 training-set statistics.
    pub fn cifar10() -> Self {
        Self {
            mean: vec![0.4914, 0.4822, 0.4465],
            std: vec![0.2470, 0.2435, 0.2616],
        }
    }

    fn check(&self, channels: usize) -> Result<()> {
        if self.mean.len() != channels || self.std.len() != channels {
            return Err(Error::Config(format!(
                "statistics cover {} channels, images have {channels}",
                self.mean.len()
            )));
        }
        if self.std.iter().any(|&s| s <= 0.0) {
            return Err(Error::Config("channel std must be positive".into()));
        }
        Ok(())
    }

    /// Maps each channel to `(x - mean) / std` in place.
    pub fn standardize(&self, images: &mut Tensor) -> Result<()> {
        let (n, c, h, w) = images.dims4()?;
        self.check(c)?;
        let plane = h * w;
        let data = images.data_mut();
        for img in 0..n {
            for ch in 0..c {
                let base = (img * c + ch) * plane;
                let (m, s) = (self.mean[ch], self.std[ch]);
                for v in &mut data[base..base + plane] {
                    *v = (*v - m) / s;
                }
            }
        }
        Ok(())
    }

    /// Inverse of [`standardize`](Self::standardize).
    pub fn unstandardize(&self, images: &mut Tensor) -> Result<()> {
        let (n, c, h, w) = images.dims4()?;
        self.check(c)?;
        let plane = h * w;
        let data = images.data_mut();
        for img in 0..n {
            for ch in 0..c {
                let base = (img * c + ch) * plane;
                let (m, s) = (self.mean[ch], self.std[ch]);
                for v in &mut data[base..base + plane] {
                    *v = *v * s + m;
                }
            }
        }
        Ok(())
    }
}

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::DataFormat { path: path.to_path_buf(), detail: detail.into() }
}

/// Number of records in a CIFAR-10 binary file, from its length alone.
pub fn cifar10_record_count(path: &Path) -> Result<usize> {
    let len = fs::metadata(path)?.len();
    if len == 0 || len % CIFAR10_RECORD_BYTES as u64 != 0 {
        return Err(format_err(
            path,
            format!("length {len} is not a positive multiple of {CIFAR10_RECORD_BYTES}"),
        ));
    }
    Ok((len / CIFAR10_RECORD_BYTES as u64) as usize)
}

/// Samples `n` records without replacement from a CIFAR-10 binary file and
/// standardizes them with the stock constants.
///
/// Each 3073-byte record is 1 label byte then 3072 pixel bytes, channel-major
/// R, G, B with each plane in row-major 32x32 order. Pixels are scaled to
/// `[0, 1]` before standardization.
pub fn load_cifar10_batch(path: &Path, n: usize, seed: u64) -> Result<LabeledBatch> {
    load_cifar10_batch_with(path, n, seed, &ChannelStats::cifar10())
}

/// [`load_cifar10_batch`] with caller-supplied standardization constants.
pub fn load_cifar10_batch_with(
    path: &Path,
    n: usize,
    seed: u64,
    stats: &ChannelStats,
) -> Result<LabeledBatch> {
    let bytes = fs::read(path)?;
    if bytes.is_empty() || bytes.len() % CIFAR10_RECORD_BYTES != 0 {
        return Err(format_err(
            path,
            format!(
                "length {} is not a positive multiple of {CIFAR10_RECORD_BYTES}",
                bytes.len()
            ),
        ));
    }
    let records = bytes.len() / CIFAR10_RECORD_BYTES;
    if n == 0 {
        return Err(Error::Contract("batch size must be at least 1".into()));
    }
    if n > records {
        return Err(Error::Contract(format!(
            "asked for {n} records, file holds {records}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, records, n);

    let mut images = Tensor::zeros(vec![n, 3, 32, 32]);
    let mut labels = Vec::with_capacity(n);
    for (row, record) in picks.iter().enumerate() {
        let rec = &bytes[record * CIFAR10_RECORD_BYTES..][..CIFAR10_RECORD_BYTES];
        let label = rec[0] as usize;
        if label >= CIFAR10_CLASSES {
            return Err(format_err(
                path,
                format!("record {record} has label byte {label}, valid labels are 0-9"),
            ));
        }
        labels.push(label);
        let dst = &mut images.data_mut()[row * 3072..][..3072];
        for (d, &p) in dst.iter_mut().zip(&rec[1..]) {
            *d = p as f64 / 255.0;
        }
    }
    stats.standardize(&mut images)?;
    LabeledBatch::new(images, labels, CIFAR10_CLASSES, Provenance::Real)
}

/// Writes a batch to the tensor container format.
///
/// Layout, all little-endian: magic `EPEB`, then u32 extents `N, C, H, W`,
/// u32 class count `K`, `N` u32 labels, and `N*C*H*W` f64 values.
pub fn write_tensor_batch(path: &Path, batch: &LabeledBatch) -> Result<()> {
    let (n, c, h, w) = batch.images().dims4()?;
    let mut out = Vec::with_capacity(24 + n * 4 + batch.images().numel() * 8);
    out.extend_from_slice(CONTAINER_MAGIC);
    for extent in [n, c, h, w, batch.num_classes()] {
        let v = u32::try_from(extent)
            .map_err(|_| Error::Contract(format!("extent {extent} exceeds u32 range")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &label in batch.labels() {
        out.extend_from_slice(&(label as u32).to_le_bytes());
    }
    for &v in batch.images().data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a batch written by [`write_tensor_batch`], validating the magic,
/// the header, and the exact byte count.
pub fn load_tensor_batch(path: &Path) -> Result<LabeledBatch> {
    let bytes = fs::read(path)?;
    if bytes.len() < 24 {
        return Err(format_err(path, format!("{} bytes is too short for a header", bytes.len())));
    }
    if &bytes[..4] != CONTAINER_MAGIC {
        return Err(format_err(path, "bad magic, expected EPEB"));
    }
    let mut fields = [0usize; 5];
    for (i, f) in fields.iter_mut().enumerate() {
        let at = 4 + i * 4;
        *f = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    }
    let [n, c, h, w, k] = fields;
    if n == 0 || c == 0 || h == 0 || w == 0 || k == 0 {
        return Err(format_err(path, format!("zero extent in header {fields:?}")));
    }
    let numel = n
        .checked_mul(c)
        .and_then(|v| v.checked_mul(h))
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| format_err(path, format!("header extents {fields:?} overflow")))?;
    let expect = 24 + n * 4 + numel * 8;
    if bytes.len() != expect {
        return Err(format_err(
            path,
            format!("expected {expect} bytes for header {fields:?}, file has {}", bytes.len()),
        ));
    }

    let labels: Vec<usize> = (0..n)
        .map(|i| {
            let at = 24 + i * 4;
            u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize
        })
        .collect();
    let values_at = 24 + n * 4;
    let data: Vec<f64> = (0..numel)
        .map(|i| {
            let at = values_at + i * 8;
            f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
        })
        .collect();
    let images = Tensor::new(vec![n, c, h, w], data)?;
    LabeledBatch::new(images, labels, k, Provenance::Real)
        .map_err(|e| format_err(path, e.to_string()))
}

/// Deterministic Gaussian fixture: `n` images of shape `[3, extent, extent]`
/// with balanced labels and a per-class mean of `class * CLASS_MEAN_OFFSET`.
pub fn synthetic_batch(n: usize, num_classes: usize, extent: usize, seed: u64) -> Result<LabeledBatch> {
    if num_classes == 0 {
        return Err(Error::Contract("synthetic batch needs at least one class".into()));
    }
    if n < num_classes {
        return Err(Error::Contract(format!(
            "{n} images cannot cover {num_classes} classes"
        )));
    }
    if extent == 0 {
        return Err(Error::Contract("image extent must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    let plane = 3 * extent * extent;
    let mut data = Vec::with_capacity(n * plane);
    for &label in &labels {
        let mean = label as f64 * CLASS_MEAN_OFFSET;
        for _ in 0..plane {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(mean + z);
        }
    }
    let images = Tensor::new(vec![n, 3, extent, extent], data)?;
    LabeledBatch::new(images, labels, num_classes, Provenance::Synthetic)
}
