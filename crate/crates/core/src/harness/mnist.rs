//! Reader for the IDX files the MNIST digits ship in.

use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != rows * cols {
            return Err(Error::Format(format!(
                "{} pixels for a {rows}x{cols} image",
                pixels.len()
            )));
        }
        Ok(GrayImage { rows, cols, pixels })
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.cols + col]
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Format("truncated IDX header".into()))
}

/// Parses an IDX3 image file (magic `0x803`); bytes are scaled by 1/255.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<GrayImage>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!("bad image magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let body = &bytes[16..];
    if body.len() != n * size {
        return Err(Error::Format(format!(
            "image file holds {} pixel bytes, header promises {}",
            body.len(),
            n * size
        )));
    }
    Ok(body
        .chunks_exact(size.max(1))
        .take(n)
        .map(|px| GrayImage {
            rows,
            cols,
            pixels: px.iter().map(|&b| f64::from(b) / 255.0).collect(),
        })
        .collect())
}

/// Parses an IDX1 label file (magic `0x801`).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!("bad label magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Format(format!(
            "label file holds {} labels, header promises {n}",
            body.len()
        )));
    }
    Ok(body.to_vec())
}

/// Loads matching image and label files.
pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<Vec<(GrayImage, u8)>> {
    let imgs = parse_idx_images(&std::fs::read(images)?)?;
    let labs = parse_idx_labels(&std::fs::read(labels)?)?;
    if imgs.len() != labs.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            imgs.len(),
            labs.len()
        )));
    }
    Ok(imgs.into_iter().zip(labs).collect())
}

/// The first `per_class` examples of every label, in file order, grouped
/// by label.
pub fn select_per_class(data: &[(GrayImage, u8)], per_class: usize) -> Vec<(GrayImage, u8)> {
    let mut labels: Vec<u8> = data.iter().map(|(_, l)| *l).collect();
    labels.sort_unstable();
    labels.dedup();
    labels
        .into_iter()
        .flat_map(|l| data.iter().filter(move |(_, x)| *x == l).take(per_class).cloned())
        .collect()
}

/// Serializes images in IDX3 form (intensities rounded to bytes).
pub fn encode_idx_images(images: &[GrayImage]) -> Vec<u8> {
    let (rows, cols) = images.first().map_or((0, 0), |i| (i.rows, i.cols));
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        out.extend(img.pixels.iter().map(|p| (p * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
