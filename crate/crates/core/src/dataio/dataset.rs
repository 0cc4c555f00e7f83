//! Labeled image datasets and their on-disk format.
//!
//! Layout (little-endian): magic `D4MD`, u32 version, u32 N, u16 H, u16 W,
//! u8 channels, u16 K, K length-prefixed UTF-8 names, N u16 labels,
//! N·H·W·channels u8 pixels.

use std::path::Path;

use super::bytes::{Reader, Writer};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const DATASET_MAGIC: [u8; 4] = *b"D4MD";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageDataset {
    /// N·H·W·channels pixel bytes, image-major row-major.
    pub images: Vec<u8>,
    /// N labels, each in `[0, K)`.
    pub labels: Vec<u16>,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub category_names: Vec<String>,
}

impl ImageDataset {
    pub fn new(
        images: Vec<u8>,
        labels: Vec<u16>,
        height: usize,
        width: usize,
        channels: usize,
        category_names: Vec<String>,
    ) -> Result<Self> {
        let n = labels.len();
        let k = category_names.len();
        if n == 0 {
            return Err(Error::InvalidArgument { op: "ImageDataset::new", msg: "empty dataset".into() });
        }
        if images.len() != n * height * width * channels {
            return Err(Error::InvalidArgument {
                op: "ImageDataset::new",
                msg: format!(
                    "{} pixel bytes but {} image(s) of {}x{}x{}",
                    images.len(),
                    n,
                    height,
                    width,
                    channels
                ),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= k) {
            return Err(Error::InvalidArgument {
                op: "ImageDataset::new",
                msg: format!("label {} out of range [0, {})", bad, k),
            });
        }
        Ok(ImageDataset { images, labels, height, width, channels, category_names })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Category count K.
    pub fn num_categories(&self) -> usize {
        self.category_names.len()
    }

    pub fn pixels_per_image(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let p = self.pixels_per_image();
        &self.images[i * p..(i + 1) * p]
    }

    /// All images as `[N, H·W·C]` rows scaled to `[0, 1]`.
    pub fn to_unit_rows(&self) -> Tensor {
        let data = self.images.iter().map(|&b| b as f64 / 255.0).collect();
        Tensor { shape: vec![self.len(), self.pixels_per_image()], data, requires_grad: false }
    }

    /// Rows `[idx, H·W·C]` for a subset of images, scaled to `[0, 1]`.
    pub fn to_unit_rows_indexed(&self, idx: &[usize]) -> Tensor {
        let p = self.pixels_per_image();
        let mut data = Vec::with_capacity(idx.len() * p);
        for &i in idx {
            data.extend(self.image(i).iter().map(|&b| b as f64 / 255.0));
        }
        Tensor { shape: vec![idx.len(), p], data, requires_grad: false }
    }

    /// Per-category image counts, length K.
    pub fn category_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_categories()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    pub fn labels_usize(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l as usize).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        w.bytes(&DATASET_MAGIC);
        w.u32(DATASET_VERSION);
        w.u32(self.len() as u32);
        w.u16(self.height as u16);
        w.u16(self.width as u16);
        w.u8(self.channels as u8);
        w.u16(self.num_categories() as u16);
        for name in &self.category_names {
            w.string(name);
        }
        for &l in &self.labels {
            w.u16(l);
        }
        w.bytes(&self.images);
        Ok(w.buf)
    }

    pub fn from_bytes(buf: &[u8], path: &str) -> Result<Self> {
        let mut r = Reader::new(buf, path);
        r.expect_magic(DATASET_MAGIC)?;
        r.expect_version(DATASET_VERSION)?;
        let n = r.u32()? as usize;
        let height = r.u16()? as usize;
        let width = r.u16()? as usize;
        let channels = r.u8()? as usize;
        let k = r.u16()? as usize;
        let mut category_names = Vec::with_capacity(k);
        for _ in 0..k {
            category_names.push(r.string()?);
        }
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            labels.push(r.u16()?);
        }
        let images = r.take(n * height * width * channels)?.to_vec();
        r.expect_end()?;
        ImageDataset::new(images, labels, height, width, channels, category_names)
            .map_err(|e| Error::Malformed { path: path.into(), offset: buf.len(), msg: e.to_string() })
    }
}

pub fn save_dataset(dataset: &ImageDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, dataset.to_bytes()?)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<ImageDataset> {
    let path = path.as_ref();
    let buf = std::fs::read(path)?;
    ImageDataset::from_bytes(&buf, &path.display().to_string())
}
