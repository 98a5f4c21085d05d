use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::record::Record;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(Error::TruncatedFile)
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found == expected {
        Ok(())
    } else {
        Err(Error::BadMagic { expected, found })
    }
}

/// Parses an IDX3 image file into `(rows, cols, pixels)`, one pixel vector
/// per image in row-major order.
pub fn read_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let body = &bytes[16..];
    if body.len() < count.saturating_mul(size) {
        return Err(Error::TruncatedFile);
    }
    let images = body.chunks_exact(size.max(1)).take(count).map(<[u8]>::to_vec).collect();
    Ok((rows, cols, images))
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::TruncatedFile);
    }
    Ok(body[..count].to_vec())
}

/// Loads an image/label file pair as records with raw 0-255 pixel features,
/// the digit as label, and the file position as id.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let (_, _, images) = read_idx_images(&fs::read(images_path)?)?;
    let labels = read_idx_labels(&fs::read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (pixels, label))| {
            Record::new(i as u64, pixels.into_iter().map(f64::from).collect()).with_label(label.to_string())
        })
        .collect())
}
