//! Labelled datasets and the LDAT container.
//!
//! LDAT layout (all integers little-endian):
//!
//! | field      | type            | notes                                   |
//! |------------|-----------------|-----------------------------------------|
//! | magic      | `b"LDAT"`       |                                         |
//! | version    | u16             | currently 1                             |
//! | dtype      | u8              | 0 = u8 image, 1 = f64 vector            |
//! | rank       | u8              | 4 for images, 2 for vectors             |
//! | dims       | u32 × rank      | first dim is the sample count           |
//! | n_classes  | u32             |                                         |
//! | labels     | u32 × count     |                                         |
//! | payload    | row-major       | u8 per pixel, or f64 per value          |
//!
//! Image pixels live in memory as `byte / 255`, so load → save reproduces the
//! original bytes exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{put_f64s, put_u16, put_u32, Reader};
use crate::error::{Error, Result};
use crate::numkit::tensor::numel;
use crate::numkit::Tensor;

pub const LDAT_MAGIC: [u8; 4] = *b"LDAT";
pub const LDAT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    /// `[h, w, c]` pixels in `[0, 1]`, stored as u8.
    Image,
    /// `[dim]` real vectors, stored as f64.
    Vector,
}

impl SampleKind {
    fn tag(self) -> u8 {
        match self {
            SampleKind::Image => 0,
            SampleKind::Vector => 1,
        }
    }

    fn rank(self) -> usize {
        match self {
            SampleKind::Image => 4,
            SampleKind::Vector => 2,
        }
    }
}

pub(crate) fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    samples: Tensor,
    labels: Vec<usize>,
    n_classes: usize,
    kind: SampleKind,
    class_index: Vec<Vec<usize>>,
}

impl LabeledDataset {
    /// Labels must be dense in `0..n_classes` with every class present.
    pub fn new(samples: Tensor, labels: Vec<usize>, n_classes: usize, kind: SampleKind) -> Result<Self> {
        if samples.shape().len() != kind.rank() {
            return Err(Error::BadShape(format!(
                "{kind:?} samples need rank {}, got {:?}",
                kind.rank(),
                samples.shape()
            )));
        }
        if samples.rows() != labels.len() {
            return Err(Error::BadShape(format!("{} samples but {} labels", samples.rows(), labels.len())));
        }
        let mut class_index = vec![Vec::new(); n_classes];
        for (i, &l) in labels.iter().enumerate() {
            if l >= n_classes {
                return Err(Error::BadShape(format!("label {l} outside 0..{n_classes}")));
            }
            class_index[l].push(i);
        }
        if let Some(c) = class_index.iter().position(Vec::is_empty) {
            return Err(Error::BadShape(format!("class {c} has no samples")));
        }
        if kind == SampleKind::Image && samples.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::BadShape("image pixels must lie in [0, 1]".into()));
        }
        Ok(LabeledDataset { samples, labels, n_classes, kind, class_index })
    }

    pub fn samples(&self) -> &Tensor {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn kind(&self) -> SampleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.samples.shape()[1..]
    }

    pub fn class_indices(&self, class: usize) -> &[usize] {
        &self.class_index[class]
    }

    /// Samples of the given classes, labels dropped, in dataset order.
    pub fn unlabeled_subset(&self, classes: &[usize]) -> Tensor {
        let mut keep = vec![false; self.n_classes];
        for &c in classes {
            keep[c] = true;
        }
        let rows: Vec<usize> = (0..self.len()).filter(|&i| keep[self.labels[i]]).collect();
        self.samples.select_rows(&rows)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = self.samples.shape();
        let mut out = Vec::with_capacity(32 + self.len() * 4 + self.samples.len() * 8);
        out.extend_from_slice(&LDAT_MAGIC);
        put_u16(&mut out, LDAT_VERSION);
        out.push(self.kind.tag());
        out.push(shape.len() as u8);
        for &d in shape {
            put_u32(&mut out, d as u32);
        }
        put_u32(&mut out, self.n_classes as u32);
        for &l in &self.labels {
            put_u32(&mut out, l as u32);
        }
        match self.kind {
            SampleKind::Image => out.extend(self.samples.data().iter().map(|&v| quantize(v))),
            SampleKind::Vector => put_f64s(&mut out, self.samples.data()),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "LDAT");
        r.magic(LDAT_MAGIC)?;
        let version = r.u16()?;
        if version != LDAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let kind = match r.u8()? {
            0 => SampleKind::Image,
            1 => SampleKind::Vector,
            t => return Err(Error::BadShape(format!("unknown dtype tag {t}"))),
        };
        let rank = r.u8()? as usize;
        if rank != kind.rank() {
            return Err(Error::BadShape(format!("{kind:?} data with rank {rank}")));
        }
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if dims.contains(&0) {
            return Err(Error::BadShape(format!("zero dimension in {dims:?}")));
        }
        let n_classes = r.u32()? as usize;
        let count = dims[0];
        let labels = (0..count).map(|_| r.u32().map(|l| l as usize)).collect::<Result<Vec<_>>>()?;
        let n = numel(&dims);
        let data = match kind {
            SampleKind::Image => r.take(n)?.iter().map(|&b| b as f64 / 255.0).collect(),
            SampleKind::Vector => r.f64s(n)?,
        };
        if r.remaining() != 0 {
            return Err(Error::BadShape(format!("{} trailing bytes after payload", r.remaining())));
        }
        LabeledDataset::new(Tensor::new(dims, data)?, labels, n_classes, kind)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        LabeledDataset::from_bytes(&fs::read(path)?)
    }
}

/// Reads an LDAT file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    LabeledDataset::load(path)
}

pub fn save_dataset(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    dataset.save(path)
}
