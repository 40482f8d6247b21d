//! IDX image/label files (the MNIST container format).
//!
//! Magics are big-endian: `0x0000_0803` for the 3-D image file and
//! `0x0000_0801` for the 1-D label file. Pixels are bytes scaled to
//! `[0, 1]` by division with 255; raw labels `0..=9` are shifted up by one
//! so that 0 stays free for the reject decision.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::data::Dataset;
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(r: &mut impl Read, path: &Path, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| {
        Error::format(
            path.display().to_string(),
            format!("truncated before {what}"),
        )
    })?;
    Ok(u32::from_be_bytes(buf))
}

fn read_bytes(r: &mut impl Read, n: usize, path: &Path, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(|_| {
        Error::format(
            path.display().to_string(),
            format!("truncated inside {what}: expected {n} bytes"),
        )
    })?;
    Ok(buf)
}

/// Loads an IDX image file plus its matching IDX label file.
///
/// Sample shape comes out as `[1, rows, cols]` (single channel), features
/// as `pixel / 255`, labels as `raw + 1`, and `num_classes` as 10.
pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let file = File::open(images).map_err(|e| Error::io(images.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let magic = read_u32_be(&mut r, images, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(
            images.display().to_string(),
            format!("image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        ));
    }
    let n = read_u32_be(&mut r, images, "image count")? as usize;
    let rows = read_u32_be(&mut r, images, "row count")? as usize;
    let cols = read_u32_be(&mut r, images, "column count")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(
            images.display().to_string(),
            format!("degenerate image dimensions {rows}x{cols}"),
        ));
    }
    let pixels = read_bytes(&mut r, n * rows * cols, images, "pixel data")?;

    let file = File::open(labels).map_err(|e| Error::io(labels.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let magic = read_u32_be(&mut r, labels, "label magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(
            labels.display().to_string(),
            format!("label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        ));
    }
    let n_labels = read_u32_be(&mut r, labels, "label count")? as usize;
    if n_labels != n {
        return Err(Error::Data(format!(
            "{n} images but {n_labels} labels"
        )));
    }
    let raw_labels = read_bytes(&mut r, n, labels, "label data")?;
    if let Some(&bad) = raw_labels.iter().find(|&&l| l > 9) {
        return Err(Error::format(
            labels.display().to_string(),
            format!("raw label {bad} outside 0..=9"),
        ));
    }

    let features = Array2::from_shape_vec(
        (n, rows * cols),
        pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
    )
    .expect("length checked by read_bytes");
    let labels_shifted = raw_labels.iter().map(|&l| l as usize + 1).collect();
    Dataset::new(features, labels_shifted, 10, vec![1, rows, cols])
}

/// Writes images and raw labels (`0..=9`) as an IDX pair readable by
/// [`load_mnist_idx`]. `pixels` is row-major `n * rows * cols` bytes.
pub fn write_mnist_idx(
    images_path: &Path,
    labels_path: &Path,
    pixels: &[u8],
    raw_labels: &[u8],
    rows: usize,
    cols: usize,
) -> Result<()> {
    let n = raw_labels.len();
    if pixels.len() != n * rows * cols {
        return Err(Error::Data(format!(
            "{} pixels for {} {}x{} images",
            pixels.len(),
            n,
            rows,
            cols
        )));
    }
    if let Some(&bad) = raw_labels.iter().find(|&&l| l > 9) {
        return Err(Error::Data(format!("raw label {bad} outside 0..=9")));
    }

    let file =
        File::create(images_path).map_err(|e| Error::io(images_path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let header: Vec<u8> = [IMAGE_MAGIC, n as u32, rows as u32, cols as u32]
        .iter()
        .flat_map(|v| v.to_be_bytes())
        .collect();
    w.write_all(&header)
        .and_then(|_| w.write_all(pixels))
        .map_err(|e| Error::io(images_path.display().to_string(), e))?;

    let file =
        File::create(labels_path).map_err(|e| Error::io(labels_path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let header: Vec<u8> = [LABEL_MAGIC, n as u32]
        .iter()
        .flat_map(|v| v.to_be_bytes())
        .collect();
    w.write_all(&header)
        .and_then(|_| w.write_all(raw_labels))
        .map_err(|e| Error::io(labels_path.display().to_string(), e))?;
    Ok(())
}
