//! CIFAR-10 binary batches.
//!
//! Each record is `1 + 3072` bytes: a raw label `0..=9` followed by a
//! 32x32 image stored channel-major (1024 red, 1024 green, 1024 blue
//! bytes, each row-major). Pixels scale to `[0, 1]`, labels shift up by
//! one, matching the IDX loader conventions.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use crate::data::Dataset;
use crate::error::{Error, Result};

const RECORD_BYTES: usize = 1 + 3 * 32 * 32;

/// Loads one or more CIFAR-10 binary batch files into a single dataset
/// with sample shape `[3, 32, 32]`.
pub fn load_cifar10(batches: &[impl AsRef<Path>]) -> Result<Dataset> {
    if batches.is_empty() {
        return Err(Error::Data("no CIFAR batch files given".into()));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for path in batches {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        if bytes.is_empty() || bytes.len() % RECORD_BYTES != 0 {
            return Err(Error::format(
                path.display().to_string(),
                format!(
                    "{} bytes is not a whole number of {RECORD_BYTES}-byte records",
                    bytes.len()
                ),
            ));
        }
        for record in bytes.chunks_exact(RECORD_BYTES) {
            let raw = record[0];
            if raw > 9 {
                return Err(Error::format(
                    path.display().to_string(),
                    format!("raw label {raw} outside 0..=9"),
                ));
            }
            labels.push(raw as usize + 1);
            features.extend(record[1..].iter().map(|&p| f64::from(p) / 255.0));
        }
    }
    let n = labels.len();
    let features = Array2::from_shape_vec((n, RECORD_BYTES - 1), features)
        .expect("record chunks have fixed width");
    Dataset::new(features, labels, 10, vec![3, 32, 32])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records_across_files() {
        let dir = tempfile::tempdir().unwrap();
        let mk = |name: &str, labels: &[u8]| {
            let mut bytes = Vec::new();
            for (i, &l) in labels.iter().enumerate() {
                bytes.push(l);
                bytes.extend(std::iter::repeat((i * 50) as u8).take(3072));
            }
            let p = dir.path().join(name);
            std::fs::write(&p, bytes).unwrap();
            p
        };
        let a = mk("a.bin", &[0, 5]);
        let b = mk("b.bin", &[9]);
        let data = load_cifar10(&[a, b]).unwrap();
        assert_eq!(data.len(), 3);
        assert_eq!(data.labels(), &[1, 6, 10]);
        assert_eq!(data.sample_shape(), &[3, 32, 32]);
        assert!((data.row(1)[0] - 50.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn ragged_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.bin");
        std::fs::write(&p, vec![0u8; RECORD_BYTES + 1]).unwrap();
        assert!(matches!(load_cifar10(&[p]), Err(Error::Format { .. })));
    }

    #[test]
    fn bad_label_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.bin");
        let mut bytes = vec![10u8];
        bytes.extend(vec![0u8; 3072]);
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(load_cifar10(&[p]), Err(Error::Format { .. })));
    }
}
