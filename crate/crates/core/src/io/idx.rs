//! Big-endian IDX files (the MNIST distribution format).

use std::fs;
use std::io::Cursor;
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{CLASSES, GRID, GRID_AREA};

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Labeled 28 x 28 grayscale images stored row-major, back to back.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl Dataset {
    pub fn new(images: Vec<u8>, labels: Vec<u8>, split: Split) -> Result<Self> {
        if images.len() != labels.len() * GRID_AREA {
            return Err(Error::Config(format!(
                "{} image bytes do not hold {} images of {GRID_AREA} pixels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l as usize >= CLASSES) {
            return Err(Error::Image {
                index: i,
                reason: format!("label {} outside 0..9", labels[i]),
            });
        }
        Ok(Self {
            images,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * GRID_AREA..(i + 1) * GRID_AREA]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    /// The first `n` items (all of them if `n` exceeds the length).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            images: self.images[..n * GRID_AREA].to_vec(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }

    /// Items at the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut images = Vec::with_capacity(indices.len() * GRID_AREA);
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        Self {
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
        }
    }
}

fn idx_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Idx {
        offset,
        msg: msg.into(),
    }
}

fn read_header(cur: &mut Cursor<&[u8]>, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let got = cur
        .read_u32::<BigEndian>()
        .map_err(|_| idx_err(cur.position() as usize, "truncated header"))?;
    if got != magic {
        return Err(idx_err(0, format!("bad magic {got}, expected {magic}")));
    }
    (0..dims)
        .map(|_| {
            let at = cur.position() as usize;
            cur.read_u32::<BigEndian>()
                .map(|d| d as usize)
                .map_err(|_| idx_err(at, "truncated header"))
        })
        .collect()
}

/// Returns the flat pixel buffer and the image count.
pub fn parse_images(bytes: &[u8]) -> Result<(Vec<u8>, usize)> {
    let mut cur = Cursor::new(bytes);
    let dims = read_header(&mut cur, IMAGE_MAGIC, 3)?;
    if dims[1] != GRID || dims[2] != GRID {
        return Err(idx_err(8, format!("images are {}x{}, expected {GRID}x{GRID}", dims[1], dims[2])));
    }
    let body = &bytes[16..];
    let need = dims[0] * GRID_AREA;
    if body.len() < need {
        return Err(idx_err(
            16 + body.len(),
            format!("truncated: {} images need {need} bytes, found {}", dims[0], body.len()),
        ));
    }
    if body.len() > need {
        return Err(idx_err(16 + need, "trailing bytes after the last image"));
    }
    Ok((body.to_vec(), dims[0]))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut cur = Cursor::new(bytes);
    let dims = read_header(&mut cur, LABEL_MAGIC, 1)?;
    let body = &bytes[8..];
    if body.len() < dims[0] {
        return Err(idx_err(
            8 + body.len(),
            format!("truncated: {} labels declared, found {}", dims[0], body.len()),
        ));
    }
    if body.len() > dims[0] {
        return Err(idx_err(8 + dims[0], "trailing bytes after the last label"));
    }
    if let Some(i) = body.iter().position(|&l| l as usize >= CLASSES) {
        return Err(idx_err(8 + i, format!("label {} outside 0..9", body[i])));
    }
    Ok(body.to_vec())
}

pub fn load_mnist_idx(images: &Path, labels: &Path, split: Split) -> Result<Dataset> {
    let (pixels, n) = parse_images(&fs::read(images)?)?;
    let labels = parse_labels(&fs::read(labels)?)?;
    if labels.len() != n {
        return Err(Error::Config(format!(
            "{n} images but {} labels",
            labels.len()
        )));
    }
    Dataset::new(pixels, labels, split)
}

/// Loads `train-*` or `t10k-*` files using the standard MNIST file names.
pub fn load_mnist_dir(dir: &Path, split: Split) -> Result<Dataset> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    load_mnist_idx(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        &dir.join(format!("{prefix}-labels-idx1-ubyte")),
        split,
    )
}

pub fn write_images(data: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + data.images.len());
    for v in [IMAGE_MAGIC, data.len() as u32, GRID as u32, GRID as u32] {
        out.write_u32::<BigEndian>(v).unwrap();
    }
    out.extend_from_slice(&data.images);
    out
}

pub fn write_labels(data: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + data.len());
    for v in [LABEL_MAGIC, data.len() as u32] {
        out.write_u32::<BigEndian>(v).unwrap();
    }
    out.extend_from_slice(&data.labels);
    out
}
