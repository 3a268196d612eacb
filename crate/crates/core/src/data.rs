//! IDX loading and binary-class filtering for MNIST-style datasets.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, QcnnError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Mnist,
    Fashion,
}

impl DatasetName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mnist => "mnist",
            Self::Fashion => "fashion",
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = QcnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mnist" => Ok(Self::Mnist),
            "fashion" | "fashion_mnist" | "fashion-mnist" => Ok(Self::Fashion),
            other => Err(invalid!("unknown dataset `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn file_prefix(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Test => "t10k",
        }
    }
}

/// Images and labels as stored in a pair of IDX files.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawDataset {
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels, `rows * cols` bytes per image.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[i * size..(i + 1) * size]
    }
}

/// A binary-labelled split with 28x28 images.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub name: DatasetName,
    pub split: Split,
    pub pixels: Vec<u8>,
    /// Each label is 0 or 1.
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * PIXELS..(i + 1) * PIXELS]
    }

    /// Pixels scaled to `[0, 1]`, one row per image.
    pub fn scaled_images(&self) -> Vec<Vec<f64>> {
        self.pixels
            .chunks_exact(PIXELS)
            .map(|img| img.iter().map(|&p| f64::from(p) / 255.0).collect())
            .collect()
    }
}

/// `{0, 1}` to `{+1, -1}`.
pub fn signed_label(y: u8) -> f64 {
    1.0 - 2.0 * f64::from(y)
}

fn parse_error(offset: usize, message: impl Into<String>) -> QcnnError {
    QcnnError::Parse {
        offset: offset as u64,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            parse_error(
                bytes.len(),
                format!("truncated header, needed 4 bytes at {offset}"),
            )
        })
}

fn decompress_if_gzip(bytes: Vec<u8>) -> Result<Vec<u8>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| parse_error(0, format!("gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

/// Returns `(rows, cols, pixels)` from an image IDX buffer.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(parse_error(0, format!("bad image magic {magic:#010x}")));
    }
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    if rows != SIDE || cols != SIDE {
        return Err(parse_error(
            8,
            format!("expected {SIDE}x{SIDE} images, found {rows}x{cols}"),
        ));
    }
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(parse_error(
            bytes.len(),
            format!("truncated: {count} images need {} bytes", 16 + need),
        ));
    }
    Ok((count, rows, cols, body[..need].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(parse_error(0, format!("bad label magic {magic:#010x}")));
    }
    let count = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(parse_error(
            bytes.len(),
            format!("truncated: {count} labels need {} bytes", 8 + count),
        ));
    }
    if let Some(pos) = body[..count].iter().position(|&l| l > 9) {
        return Err(parse_error(
            8 + pos,
            format!("label {} out of range 0..9", body[pos]),
        ));
    }
    Ok(body[..count].to_vec())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    decompress_if_gzip(std::fs::read(path)?)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawDataset> {
    let (count, rows, cols, pixels) = parse_idx_images(&read_file(images_path)?)?;
    let labels = parse_idx_labels(&read_file(labels_path)?)?;
    if labels.len() != count {
        return Err(parse_error(
            4,
            format!("{count} images but {} labels", labels.len()),
        ));
    }
    Ok(RawDataset {
        rows,
        cols,
        pixels,
        labels,
    })
}

/// Keeps items labelled `classes.0` or `classes.1`, relabelled 0 and 1.
pub fn filter_binary(
    raw: &RawDataset,
    name: DatasetName,
    split: Split,
    classes: (u8, u8),
) -> Dataset {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for (i, &l) in raw.labels.iter().enumerate() {
        let mapped = if l == classes.0 {
            0
        } else if l == classes.1 {
            1
        } else {
            continue;
        };
        pixels.extend_from_slice(raw.image(i));
        labels.push(mapped);
    }
    Dataset {
        name,
        split,
        pixels,
        labels,
    }
}

/// `<root>/<dataset>/<prefix>-images-idx3-ubyte[.gz]` and the matching labels file.
pub fn split_paths(root: &Path, name: DatasetName, split: Split) -> (PathBuf, PathBuf) {
    let dir = root.join(name.as_str());
    let pick = |stem: String| {
        let plain = dir.join(&stem);
        let gz = dir.join(format!("{stem}.gz"));
        if !plain.exists() && gz.exists() {
            gz
        } else {
            plain
        }
    };
    let prefix = split.file_prefix();
    (
        pick(format!("{prefix}-images-idx3-ubyte")),
        pick(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Loads and filters one split to classes 0 and 1.
pub fn load_binary(root: &Path, name: DatasetName, split: Split) -> Result<Dataset> {
    let (images, labels) = split_paths(root, name, split);
    let raw = load_idx(&images, &labels)?;
    Ok(filter_binary(&raw, name, split, (0, 1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn image_file(count: u32, body: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [IMAGES_MAGIC, count, 28, 28] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(body);
        out
    }

    fn label_file(labels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        out.extend_from_slice(labels);
        out
    }

    #[test]
    fn parses_headers() {
        let body: Vec<u8> = (0..2 * PIXELS).map(|i| (i % 251) as u8).collect();
        let (n, r, c, px) = parse_idx_images(&image_file(2, &body)).unwrap();
        assert_eq!((n, r, c), (2, 28, 28));
        assert_eq!(px, body);
        assert_eq!(parse_idx_labels(&label_file(&[3, 9])).unwrap(), vec![3, 9]);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = image_file(2, &[0; PIXELS + 5]);
        match parse_idx_images(&bytes) {
            Err(QcnnError::Parse { offset, .. }) => assert_eq!(offset, bytes.len() as u64),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_idx_images(&[0, 0, 8]),
            Err(QcnnError::Parse { .. })
        ));
    }

    #[test]
    fn bad_magic_and_label_range() {
        let mut bytes = image_file(0, &[]);
        bytes[3] = 0x01;
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(QcnnError::Parse { offset: 0, .. })
        ));
        assert!(matches!(
            parse_idx_labels(&label_file(&[1, 2, 10])),
            Err(QcnnError::Parse { offset: 10, .. })
        ));
    }

    #[test]
    fn loads_gzip_and_checks_counts() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        let mut gz = GzEncoder::new(Vec::new(), Compression::fast());
        gz.write_all(&image_file(3, &[7; 3 * PIXELS])).unwrap();
        std::fs::write(&img, gz.finish().unwrap()).unwrap();
        std::fs::write(&lab, label_file(&[0, 1, 2])).unwrap();
        let raw = load_idx(&img, &lab).unwrap();
        assert_eq!(raw.len(), 3);
        std::fs::write(&lab, label_file(&[0, 1])).unwrap();
        assert!(matches!(load_idx(&img, &lab), Err(QcnnError::Parse { .. })));
    }

    #[test]
    fn filter_preserves_order() {
        let mut pixels = Vec::new();
        for k in 0..5u8 {
            pixels.extend(std::iter::repeat_n(k, PIXELS));
        }
        let raw = RawDataset {
            rows: 28,
            cols: 28,
            pixels,
            labels: vec![1, 7, 0, 1, 3],
        };
        let d = filter_binary(&raw, DatasetName::Mnist, Split::Train, (0, 1));
        assert_eq!(d.labels, vec![1, 0, 1]);
        assert_eq!((d.image(0)[0], d.image(1)[0], d.image(2)[0]), (0, 2, 3));
        let empty = RawDataset {
            rows: 28,
            cols: 28,
            pixels: vec![],
            labels: vec![],
        };
        assert!(filter_binary(&empty, DatasetName::Mnist, Split::Test, (0, 1)).is_empty());
    }

    #[test]
    fn label_mapping() {
        assert_eq!(signed_label(0), 1.0);
        assert_eq!(signed_label(1), -1.0);
    }
}
