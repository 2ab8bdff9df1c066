//! IDX image files, graph loaders, synthetic trees and edge splits.

mod graph;

pub use graph::{
    load_cora, load_edge_list, sample_negative_edges, split_edges, synth_tree, EdgeSplit, Graph,
    LoadReport,
};

use std::path::{Path, PathBuf};

use rand::Rng;

use crate::autodiff::Tensor;
use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Greyscale images stored row-major, one byte per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pixels: Vec<u8>,
    n: usize,
    rows: usize,
    cols: usize,
    source: PathBuf,
}

impl ImageDataset {
    pub fn new(pixels: Vec<u8>, n: usize, rows: usize, cols: usize) -> Result<Self> {
        if n == 0 || rows == 0 || cols == 0 {
            return Err(Error::usage("image dataset must be non-empty"));
        }
        if pixels.len() != n * rows * cols {
            return Err(Error::DimensionMismatch {
                expected: n * rows * cols,
                got: pixels.len(),
            });
        }
        Ok(Self {
            pixels,
            n,
            rows,
            cols,
            source: PathBuf::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Pixels per image.
    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn source(&self) -> &Path {
        &self.source
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let d = self.dim();
        &self.pixels[i * d..(i + 1) * d]
    }

    /// The first `n` images.
    pub fn take(&self, n: usize) -> Result<Self> {
        let n = n.min(self.n);
        let mut out = Self::new(
            self.pixels[..n * self.dim()].to_vec(),
            n,
            self.rows,
            self.cols,
        )?;
        out.source = self.source.clone();
        Ok(out)
    }

    /// Freshly binarized `len(idx)×dim` batch.
    pub fn binarized_batch<R: Rng + ?Sized>(&self, idx: &[usize], rng: &mut R) -> Tensor {
        let d = self.dim();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend(dynamic_binarize(self.image(i), rng));
        }
        Tensor::matrix(idx.len(), d, data)
    }

    /// Grey values scaled to `[0, 1]`, `len(idx)×dim`.
    pub fn scaled_batch(&self, idx: &[usize]) -> Tensor {
        let d = self.dim();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend(self.image(i).iter().map(|&v| v as f64 / 255.0));
        }
        Tensor::matrix(idx.len(), d, data)
    }
}

/// Pixel `k` becomes 1 with probability `img[k] / 255`.
pub fn dynamic_binarize<R: Rng + ?Sized>(img: &[u8], rng: &mut R) -> Vec<f64> {
    img.iter()
        .map(|&v| {
            let u: f64 = rng.random();
            if u * 255.0 < v as f64 {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            offset: offset as u64,
            msg: "file ends inside the header".into(),
        })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn check_magic(bytes: &[u8], want: u32, path: &Path) -> Result<()> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != want {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            msg: format!("bad magic {magic:#010x}, expected {want:#010x}"),
        });
    }
    Ok(())
}

fn check_len(bytes: &[u8], header: usize, body: usize, path: &Path) -> Result<()> {
    if bytes.len() < header + body {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: bytes.len() as u64,
            msg: format!(
                "truncated: expected {} bytes, found {}",
                header + body,
                bytes.len()
            ),
        });
    }
    if bytes.len() > header + body {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: (header + body) as u64,
            msg: format!("{} trailing bytes", bytes.len() - header - body),
        });
    }
    Ok(())
}

/// Reads an IDX3 image file (`magic 0x00000803`, then `n`, `rows`, `cols`
/// as big-endian `u32`, then `n·rows·cols` bytes).
pub fn read_idx(path: &Path) -> Result<ImageDataset> {
    let bytes = read_bytes(path)?;
    check_magic(&bytes, IDX_IMAGES_MAGIC, path)?;
    let n = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    check_len(&bytes, 16, n * rows * cols, path)?;
    let mut ds =
        ImageDataset::new(bytes[16..].to_vec(), n, rows, cols).map_err(|_| Error::Format {
            path: path.to_path_buf(),
            offset: 4,
            msg: "image file declares zero images or zero-sized images".into(),
        })?;
    ds.source = path.to_path_buf();
    Ok(ds)
}

pub fn write_idx(path: &Path, ds: &ImageDataset) -> Result<()> {
    let mut out = Vec::with_capacity(16 + ds.pixels.len());
    for v in [
        IDX_IMAGES_MAGIC,
        ds.n as u32,
        ds.rows as u32,
        ds.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&ds.pixels);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads an IDX1 label file (`magic 0x00000801`).
pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_bytes(path)?;
    check_magic(&bytes, IDX_LABELS_MAGIC, path)?;
    let n = be_u32(&bytes, 4, path)? as usize;
    check_len(&bytes, 8, n, path)?;
    Ok(bytes[8..].to_vec())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
