//! Dataset ingestion, median binarization and epoch batching.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::bitcore::BitMatrix;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
/// Class count of the IDX datasets handled here (digits, clothing).
pub const IDX_CLASSES: usize = 10;

pub const FEATURES_MAGIC: &[u8; 4] = b"BMF1";
pub const FEATURES_VERSION: u32 = 1;
pub const LABELS_MAGIC: &[u8; 4] = b"BML1";

/// Real-valued features, row-major `n × d`, with labels below `classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    features: Vec<f32>,
    labels: Vec<u8>,
    dim: usize,
    classes: usize,
}

impl RawDataset {
    pub fn new(features: Vec<f32>, labels: Vec<u8>, dim: usize, classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("dataset has no samples".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Shape(format!(
                "{} feature values for {} samples of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y as usize >= classes) {
            return Err(Error::InvalidInput(format!("label {y} not below class count {classes}")));
        }
        Ok(Self { features, labels, dim, classes })
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

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
}

/// Packed ±1 inputs together with the thresholds that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarizedDataset {
    inputs: BitMatrix,
    labels: Vec<u8>,
    thresholds: Vec<f64>,
    classes: usize,
}

impl BinarizedDataset {
    pub fn from_parts(inputs: BitMatrix, labels: Vec<u8>, classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::Shape(format!("{} rows for {} labels", inputs.rows(), labels.len())));
        }
        if let Some(&y) = labels.iter().find(|&&y| y as usize >= classes) {
            return Err(Error::InvalidInput(format!("label {y} not below class count {classes}")));
        }
        Ok(Self { inputs, labels, thresholds: Vec::new(), classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.inputs.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn inputs(&self) -> &BitMatrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// The first `n` samples.
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        Self {
            inputs: self.inputs.select_rows(&idx),
            labels: self.labels[..idx.len()].to_vec(),
            thresholds: self.thresholds.clone(),
            classes: self.classes,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(path: &'a Path, bytes: &'a [u8]) -> Self {
        Self { path, bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(
                self.path,
                format!("truncated: needed {n} bytes at offset {}, file has {}", self.pos, self.bytes.len()),
            )
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32_be(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u32_le(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(self.path, format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

/// Reads an IDX image file (`0x00000803`) and label file (`0x00000801`).
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<RawDataset> {
    let (ipath, lpath) = (images.as_ref(), labels.as_ref());
    let ibytes = read(ipath)?;
    let lbytes = read(lpath)?;

    let mut cur = Cursor::new(ipath, &ibytes);
    let magic = cur.u32_be()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(ipath, format!("bad image magic {magic:#010x}")));
    }
    let n = cur.u32_be()? as usize;
    let rows = cur.u32_be()? as usize;
    let cols = cur.u32_be()? as usize;
    let dim = rows * cols;
    let pixels = cur.take(n * dim)?;
    cur.finish()?;

    let mut cur = Cursor::new(lpath, &lbytes);
    let magic = cur.u32_be()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(lpath, format!("bad label magic {magic:#010x}")));
    }
    let n_labels = cur.u32_be()? as usize;
    if n_labels != n {
        return Err(Error::format(lpath, format!("{n_labels} labels for {n} images")));
    }
    let labels = cur.take(n)?.to_vec();
    cur.finish()?;
    if let Some(&y) = labels.iter().find(|&&y| y as usize >= IDX_CLASSES) {
        return Err(Error::format(lpath, format!("label {y} out of range")));
    }
    if n == 0 {
        return Err(Error::format(ipath, "no samples"));
    }

    let features = pixels.iter().map(|&p| p as f32).collect();
    RawDataset::new(features, labels, dim, IDX_CLASSES)
}

/// Reads a `BMF1` feature matrix and `BML1` label file. The class count is
/// one more than the largest label.
pub fn load_feature_matrix(features: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<RawDataset> {
    let (fpath, lpath) = (features.as_ref(), labels.as_ref());
    let fbytes = read(fpath)?;
    let lbytes = read(lpath)?;

    let mut cur = Cursor::new(fpath, &fbytes);
    if cur.take(4)? != FEATURES_MAGIC {
        return Err(Error::format(fpath, "bad feature magic"));
    }
    let version = cur.u32_le()?;
    if version != FEATURES_VERSION {
        return Err(Error::Version { path: fpath.into(), found: version });
    }
    let n = cur.u32_le()? as usize;
    let dim = cur.u32_le()? as usize;
    let body_len = n
        .checked_mul(dim)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::format(fpath, "declared size overflows"))?;
    if fbytes.len() - cur.pos != body_len {
        return Err(Error::format(
            fpath,
            format!("length mismatch: header declares {n}x{dim} floats, body has {} bytes", fbytes.len() - cur.pos),
        ));
    }
    let values: Vec<f32> =
        cur.take(body_len)?.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();

    let mut cur = Cursor::new(lpath, &lbytes);
    if cur.take(4)? != LABELS_MAGIC {
        return Err(Error::format(lpath, "bad label magic"));
    }
    let n_labels = cur.u32_le()? as usize;
    if n_labels != n {
        return Err(Error::format(lpath, format!("{n_labels} labels for {n} samples")));
    }
    let labels = cur.take(n)?.to_vec();
    cur.finish()?;
    if n == 0 {
        return Err(Error::format(fpath, "no samples"));
    }
    let classes = (*labels.iter().max().unwrap() as usize + 1).max(2);
    RawDataset::new(values, labels, dim, classes)
}

/// Writes `ds` in the `BMF1` / `BML1` layout.
pub fn write_feature_matrix(ds: &RawDataset, features: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<()> {
    let mut f = Vec::with_capacity(16 + ds.features.len() * 4);
    f.extend_from_slice(FEATURES_MAGIC);
    f.extend_from_slice(&FEATURES_VERSION.to_le_bytes());
    f.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    f.extend_from_slice(&(ds.dim as u32).to_le_bytes());
    for v in &ds.features {
        f.extend_from_slice(&v.to_le_bytes());
    }
    let mut l = Vec::with_capacity(8 + ds.len());
    l.extend_from_slice(LABELS_MAGIC);
    l.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    l.extend_from_slice(&ds.labels);
    write_file(features.as_ref(), &f)?;
    write_file(labels.as_ref(), &l)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Per-feature median over the training set; even counts average the two
/// middle order statistics.
pub fn median_thresholds(train: &RawDataset) -> Vec<f64> {
    let n = train.len();
    let mut column = Vec::with_capacity(n);
    (0..train.dim)
        .map(|j| {
            column.clear();
            column.extend((0..n).map(|i| train.features[i * train.dim + j]));
            column.sort_unstable_by(f32::total_cmp);
            if n % 2 == 1 {
                column[n / 2] as f64
            } else {
                (column[n / 2 - 1] as f64 + column[n / 2] as f64) / 2.0
            }
        })
        .collect()
}

/// `+1` where a feature is strictly above its threshold, `−1` otherwise.
pub fn binarize(ds: &RawDataset, thresholds: &[f64]) -> Result<BinarizedDataset> {
    if thresholds.len() != ds.dim {
        return Err(Error::Shape(format!("{} thresholds for {} features", thresholds.len(), ds.dim)));
    }
    let inputs = BitMatrix::from_fn(ds.len(), ds.dim, |i, j| ds.features[i * ds.dim + j] as f64 > thresholds[j]);
    Ok(BinarizedDataset { inputs, labels: ds.labels.clone(), thresholds: thresholds.to_vec(), classes: ds.classes })
}

/// Sample indices for each mini-batch of one epoch: a seeded permutation cut
/// into chunks of `batch_size`, the last one possibly short.
pub fn batches(n: usize, batch_size: usize, seed: u64, epoch: u32) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, Purpose::Shuffle { epoch }));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}
