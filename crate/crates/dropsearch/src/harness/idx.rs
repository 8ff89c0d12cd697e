//! IDX binary format: big-endian magic + dimensions header, raw byte pixels.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, path: &Path, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: bytes.len() as u64,
            message: format!("file truncated while reading {what}"),
        });
    }
    Ok(u32::from_be_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]]))
}

/// Loads an IDX image/label pair into `(tensor, label)` samples. Pixels scale
/// to `[0, 1]` by division by 255; image tensors have shape `(1, rows, cols)`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<(Tensor<f32>, usize)>> {
    let image_bytes = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let label_bytes = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;

    let magic = read_u32(&image_bytes, 0, images_path, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format {
            path: images_path.to_path_buf(),
            offset: 0,
            message: format!("bad image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}"),
        });
    }
    let count = read_u32(&image_bytes, 4, images_path, "image count")? as usize;
    let rows = read_u32(&image_bytes, 8, images_path, "row count")? as usize;
    let cols = read_u32(&image_bytes, 12, images_path, "column count")? as usize;
    let expected = 16 + count * rows * cols;
    if image_bytes.len() < expected {
        return Err(Error::Format {
            path: images_path.to_path_buf(),
            offset: image_bytes.len() as u64,
            message: format!("image data truncated: expected {expected} bytes"),
        });
    }

    let label_magic = read_u32(&label_bytes, 0, labels_path, "label magic")?;
    if label_magic != LABEL_MAGIC {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            offset: 0,
            message: format!("bad label magic 0x{label_magic:08x}, expected 0x{LABEL_MAGIC:08x}"),
        });
    }
    let label_count = read_u32(&label_bytes, 4, labels_path, "label count")? as usize;
    if label_bytes.len() < 8 + label_count {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            offset: label_bytes.len() as u64,
            message: format!("label data truncated: expected {} bytes", 8 + label_count),
        });
    }
    if label_count != count {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            offset: 4,
            message: format!("{count} images but {label_count} labels"),
        });
    }

    let mut samples = Vec::with_capacity(count);
    let plane = rows * cols;
    for i in 0..count {
        let start = 16 + i * plane;
        let data: Vec<f32> = image_bytes[start..start + plane]
            .iter()
            .map(|&b| b as f32 / 255.0)
            .collect();
        let tensor = Tensor::new(vec![1, rows, cols], data)?;
        samples.push((tensor, label_bytes[8 + i] as usize));
    }
    Ok(samples)
}

/// Writes images in IDX3 layout (one byte per pixel, row-major).
pub fn write_idx_images(path: &Path, images: &[Vec<u8>], rows: usize, cols: usize) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut header = Vec::with_capacity(16);
    header.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    header.extend_from_slice(&(images.len() as u32).to_be_bytes());
    header.extend_from_slice(&(rows as u32).to_be_bytes());
    header.extend_from_slice(&(cols as u32).to_be_bytes());
    file.write_all(&header).map_err(|e| Error::io(path, e))?;
    for image in images {
        debug_assert_eq!(image.len(), rows * cols);
        file.write_all(image).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Writes labels in IDX1 layout.
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut header = Vec::with_capacity(8);
    header.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    header.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    file.write_all(&header).map_err(|e| Error::io(path, e))?;
    file.write_all(labels).map_err(|e| Error::io(path, e))?;
    Ok(())
}
