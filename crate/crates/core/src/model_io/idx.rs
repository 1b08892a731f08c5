//! IDX files (the MNIST distribution format): big-endian magic and
//! dimensions followed by raw unsigned bytes. Gzip-compressed files are
//! detected by their header and decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Parses an IDX unsigned-byte array, returning its dimensions and data.
fn parse_idx(bytes: &[u8], magic: u32, what: &str) -> Result<(Vec<usize>, Vec<u8>)> {
    let be = |at: usize| -> Option<u32> { bytes.get(at..at + 4).map(|b| u32::from_be_bytes(b.try_into().unwrap())) };
    let found = be(0).ok_or_else(|| Error::Dataset(format!("{what}: file too short")))?;
    if found != magic {
        return Err(Error::Dataset(format!(
            "{what}: bad magic 0x{found:08X}, expected 0x{magic:08X}"
        )));
    }
    let ndim = (magic & 0xFF) as usize;
    let dims = (0..ndim)
        .map(|d| be(4 + 4 * d).map(|v| v as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Dataset(format!("{what}: truncated dimension header")))?;
    let start = 4 + 4 * ndim;
    let len: usize = dims.iter().product();
    let data = bytes
        .get(start..start + len)
        .ok_or_else(|| Error::Dataset(format!("{what}: expected {len} data bytes, dimension mismatch")))?;
    if bytes.len() != start + len {
        return Err(Error::Dataset(format!(
            "{what}: {} trailing bytes after {dims:?} array",
            bytes.len() - start - len
        )));
    }
    Ok((dims, data.to_vec()))
}

/// Loads an image/label IDX pair as `[n, 1, rows, cols]` inputs scaled to [0, 1].
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let (dims, pixels) = parse_idx(&read_bytes(images_path)?, IMAGES_MAGIC, "images")?;
    let (ldims, labels) = parse_idx(&read_bytes(labels_path)?, LABELS_MAGIC, "labels")?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    if ldims[0] != n {
        return Err(Error::Dataset(format!("{n} images but {} labels", ldims[0])));
    }
    if n == 0 {
        return Err(Error::Dataset("IDX files hold no samples".into()));
    }
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1).max(2);
    let inputs = Tensor::new(
        vec![n, 1, rows, cols],
        pixels.into_iter().map(|p| p as f32 / 255.0).collect(),
    )?;
    let id = images_path
        .parent()
        .and_then(|p| p.file_name())
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(id, inputs, labels, num_classes)
}

pub fn write_idx_images(path: impl AsRef<Path>, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    for v in [LABELS_MAGIC, labels.len() as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(labels);
    fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}
