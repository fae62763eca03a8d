//! IDX files (the MNIST distribution format): big-endian magic and
//! dimensions followed by raw unsigned bytes.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use surqnn_core::{Dataset, Image};

use crate::error::{CliError, CliResult};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> CliResult<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| truncated(path))
}

fn truncated(path: &Path) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source: io::Error::new(io::ErrorKind::UnexpectedEof, "truncated IDX file"),
    }
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// `(rows, cols, pixel bytes per image)`
pub fn read_images(path: &Path) -> CliResult<(usize, usize, Vec<Vec<u8>>)> {
    let bytes = read(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(CliError::Format(format!(
            "{}: image magic is {magic:#010x}, expected {IMAGES_MAGIC:#010x}",
            path.display()
        )));
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let size = rows * cols;
    let body = bytes.get(16..16 + count * size).ok_or_else(|| truncated(path))?;
    Ok((rows, cols, body.chunks_exact(size.max(1)).map(<[u8]>::to_vec).collect()))
}

pub fn read_labels(path: &Path) -> CliResult<Vec<u8>> {
    let bytes = read(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(CliError::Format(format!(
            "{}: label magic is {magic:#010x}, expected {LABELS_MAGIC:#010x}",
            path.display()
        )));
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    Ok(bytes.get(8..8 + count).ok_or_else(|| truncated(path))?.to_vec())
}

/// Loads an image/label pair; pixels are scaled to `[0, 1]` and the class
/// count is one past the largest label.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> CliResult<Dataset> {
    let (rows, cols, raw) = read_images(images_path)?;
    let labels = read_labels(labels_path)?;
    if raw.len() != labels.len() {
        return Err(CliError::Consistency(format!(
            "{} holds {} images but {} holds {} labels",
            images_path.display(),
            raw.len(),
            labels_path.display(),
            labels.len()
        )));
    }
    let class_count = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let images = raw
        .into_iter()
        .map(|px| Image::new(rows, cols, 1, px.iter().map(|&b| b as f64 / 255.0).collect()))
        .collect::<surqnn_core::Result<Vec<_>>>()?;
    Ok(Dataset::new(images, labels.into_iter().map(usize::from).collect(), class_count)?)
}

/// Writes a single-channel dataset as an IDX pair. Pixels are rounded to
/// the nearest byte, so anything read by [`load_idx`] round-trips exactly.
pub fn save_idx(ds: &Dataset, images: &Path, labels: &Path) -> CliResult<()> {
    let (rows, cols) = match ds.image_shape() {
        Some((r, c, 1)) => (r, c),
        Some(_) => return Err(CliError::Format("IDX images must have one channel".into())),
        None => (0, 0),
    };
    if ds.labels.iter().any(|&l| l > u8::MAX as usize) {
        return Err(CliError::Format("IDX labels must fit in a byte".into()));
    }
    let mut img = Vec::with_capacity(16 + ds.len() * rows * cols);
    for v in [IMAGES_MAGIC, ds.len() as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    for im in &ds.images {
        img.extend(im.pixels.iter().map(|p| (p * 255.0).round() as u8));
    }
    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    lab.extend(ds.labels.iter().map(|&l| l as u8));
    write_file(images, &img)?;
    write_file(labels, &lab)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let io_err = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(bytes).map_err(io_err)
}
