//! IDX image/label files (big-endian headers).

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::error::{IdxError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Images flattened to rows of `rows × cols` values in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxDataset {
    images: Tensor,
    labels: Vec<u8>,
    rows: usize,
    cols: usize,
    checksum: String,
}

fn be_u32(buf: &[u8], at: usize, what: &'static str) -> Result<u32, IdxError> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(IdxError::Truncated {
            what,
            expected: at + 4,
            actual: buf.len(),
        })
}

fn check_magic(buf: &[u8], expected: u32, what: &'static str) -> Result<(), IdxError> {
    if buf.len() < 4 {
        return Err(IdxError::Truncated {
            what,
            expected: 4,
            actual: buf.len(),
        });
    }
    let found: [u8; 4] = buf[..4].try_into().expect("4 bytes");
    if u32::from_be_bytes(found) != expected {
        return Err(IdxError::BadMagic { expected, found });
    }
    Ok(())
}

pub fn pixel_to_unit(p: u8) -> f64 {
    p as f64 / 127.5 - 1.0
}

pub fn unit_to_pixel(v: f64) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

impl IdxDataset {
    /// Parses in-memory image and label files.
    pub fn parse(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Self, IdxError> {
        check_magic(image_bytes, IMAGES_MAGIC, "image header")?;
        check_magic(label_bytes, LABELS_MAGIC, "label header")?;
        let n = be_u32(image_bytes, 4, "image header")? as usize;
        let rows = be_u32(image_bytes, 8, "image header")? as usize;
        let cols = be_u32(image_bytes, 12, "image header")? as usize;
        let n_labels = be_u32(label_bytes, 4, "label header")? as usize;
        let pixels = &image_bytes[16..];
        let want = n * rows * cols;
        if pixels.len() != want {
            return Err(IdxError::Truncated {
                what: "image payload",
                expected: want,
                actual: pixels.len(),
            });
        }
        let labels = &label_bytes[8..];
        if labels.len() != n_labels {
            return Err(IdxError::Truncated {
                what: "label payload",
                expected: n_labels,
                actual: labels.len(),
            });
        }
        if n != n_labels {
            return Err(IdxError::CountMismatch {
                images: n,
                labels: n_labels,
            });
        }
        let mut hasher = Sha256::new();
        hasher.update(image_bytes);
        hasher.update(label_bytes);
        let checksum = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        let data = pixels.iter().map(|&p| pixel_to_unit(p)).collect();
        let images = Tensor::new(vec![n, rows * cols], data).expect("length checked");
        Ok(Self {
            images,
            labels: labels.to_vec(),
            rows,
            cols,
            checksum,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// SHA-256 of the source image and label bytes, hex encoded.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    /// Images whose label equals `digit`, one per row.
    pub fn images_with_label(&self, digit: u8) -> Tensor {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == digit).collect();
        if idx.is_empty() {
            return Tensor::zeros(&[0, self.rows * self.cols]);
        }
        self.images.select_rows(&idx)
    }

    pub fn encode_images(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.images.numel());
        out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        for d in [self.len(), self.rows, self.cols] {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend(self.images.data().iter().map(|&v| unit_to_pixel(v)));
        out
    }

    pub fn encode_labels(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.len());
        out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        out.extend_from_slice(&(self.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.labels);
        out
    }

    pub fn write(&self, images_path: &Path, labels_path: &Path) -> Result<()> {
        fs::write(images_path, self.encode_images())?;
        fs::write(labels_path, self.encode_labels())?;
        Ok(())
    }
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<IdxDataset> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;
    Ok(IdxDataset::parse(&images, &labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (Vec<u8>, Vec<u8>) {
        let mut img = Vec::new();
        img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        for d in [3u32, 2, 2] {
            img.extend_from_slice(&d.to_be_bytes());
        }
        img.extend_from_slice(&[0, 255, 128, 7, 1, 2, 3, 4, 250, 251, 252, 253]);
        let mut lab = Vec::new();
        lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&3u32.to_be_bytes());
        lab.extend_from_slice(&[1, 2, 1]);
        (img, lab)
    }

    #[test]
    fn scaling_endpoints() {
        let (img, lab) = tiny();
        let d = IdxDataset::parse(&img, &lab).unwrap();
        assert_eq!(d.images().data()[0], -1.0);
        assert_eq!(d.images().data()[1], 1.0);
        assert_eq!(d.image_dims(), (2, 2));
        assert_eq!(d.images_with_label(1).rows(), 2);
        assert_eq!(d.images_with_label(9).rows(), 0);
        assert_eq!(d.checksum().len(), 64);
    }

    #[test]
    fn round_trip_reproduces_bytes() {
        let (img, lab) = tiny();
        let d = IdxDataset::parse(&img, &lab).unwrap();
        assert_eq!(d.encode_images(), img);
        assert_eq!(d.encode_labels(), lab);
    }

    #[test]
    fn distinct_errors() {
        let (mut img, lab) = tiny();
        let good = img.clone();
        img[3] = 0x99;
        match IdxDataset::parse(&img, &lab) {
            Err(IdxError::BadMagic { found, .. }) => assert_eq!(found, [0, 0, 8, 0x99]),
            other => panic!("{other:?}"),
        }
        let err = IdxDataset::parse(&img, &lab).unwrap_err().to_string();
        assert!(err.contains("99"), "{err}");

        let short = &good[..good.len() - 1];
        assert!(matches!(
            IdxDataset::parse(short, &lab),
            Err(IdxError::Truncated { what: "image payload", .. })
        ));
        assert!(matches!(
            IdxDataset::parse(&good[..10], &lab),
            Err(IdxError::Truncated { .. })
        ));

        let mut lab2 = Vec::new();
        lab2.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        lab2.extend_from_slice(&2u32.to_be_bytes());
        lab2.extend_from_slice(&[1, 2]);
        assert!(matches!(
            IdxDataset::parse(&good, &lab2),
            Err(IdxError::CountMismatch { images: 3, labels: 2 })
        ));
    }
}
