//! Task dumps for audit and interop.
//!
//! One directory per task:
//! - `meta.json`: flat manifest (N, K_tr, K_val, policy, seed, sample shape).
//! - `train.ldat`, `val.ldat`: the samples and labels in LDAT format
//!   (`val.ldat` is omitted when `K_val = 0`).
//! - `provenance.bin`: u64 count, u64 dim, then `count × dim` f64 latents,
//!   train samples first, all little-endian.
//! - `contact.pgm`: binary greyscale sheet, one column per class, train rows
//!   above val rows.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::task::{MetaTask, Provenance, TaskSplit};
use crate::codec::{put_f64s, put_u64, Reader};
use crate::data::{quantize, LabeledDataset, SampleKind};
use crate::error::{Error, Result};
use crate::genmodel::LatentVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskManifest {
    pub n_way: usize,
    pub k_train: usize,
    pub k_val: usize,
    pub policy: String,
    pub seed: u64,
    pub sample_kind: SampleKind,
    pub sample_shape: Vec<usize>,
}

fn split_dataset(split: &TaskSplit, n_way: usize, kind: SampleKind) -> Result<LabeledDataset> {
    let samples = split.batch()?;
    let samples = match kind {
        SampleKind::Image => samples.map(|v| v.clamp(0.0, 1.0)),
        SampleKind::Vector => samples,
    };
    LabeledDataset::new(samples, split.labels.clone(), n_way, kind)
}

fn provenance_bytes(latents: &[LatentVector]) -> Vec<u8> {
    let dim = latents.first().map_or(0, LatentVector::dim);
    let mut out = Vec::with_capacity(16 + 8 * dim * latents.len());
    put_u64(&mut out, latents.len() as u64);
    put_u64(&mut out, dim as u64);
    for z in latents {
        put_f64s(&mut out, z.values());
    }
    out
}

pub fn read_provenance(bytes: &[u8]) -> Result<Vec<LatentVector>> {
    let mut r = Reader::new(bytes, "provenance");
    let count = r.u64()? as usize;
    let dim = r.u64()? as usize;
    let values = r.f64s(count.checked_mul(dim).ok_or_else(|| Error::BadShape("provenance size overflow".into()))?)?;
    if r.remaining() != 0 {
        return Err(Error::BadShape("trailing bytes in provenance".into()));
    }
    if dim == 0 {
        return Ok(Vec::new());
    }
    values.chunks_exact(dim).map(|c| LatentVector::new(c.to_vec())).collect()
}

/// Greyscale pixels of one sample as `(height, width, values in [0, 1])`.
fn sample_pixels(sample: &[f64], shape: &[usize], kind: SampleKind, lo: f64, hi: f64) -> (usize, usize, Vec<f64>) {
    match kind {
        SampleKind::Image => {
            let (h, w, c) = (shape[0], shape[1], shape[2]);
            let px = (0..h * w).map(|p| sample[p * c..(p + 1) * c].iter().sum::<f64>() / c as f64).collect();
            (h, w, px)
        }
        SampleKind::Vector => {
            let span = if hi > lo { hi - lo } else { 1.0 };
            (1, sample.len(), sample.iter().map(|v| (v - lo) / span).collect())
        }
    }
}

/// Binary PGM contact sheet: `(k_train + k_val)` rows of `n_way` cells.
pub fn contact_sheet(task: &MetaTask, kind: SampleKind) -> Vec<u8> {
    let shape = &task.train.sample_shape;
    let all = task.train.data.iter().chain(&task.val.data);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let (ch, cw, _) = sample_pixels(task.train.sample(0), shape, kind, lo, hi);
    let rows = task.k_train + task.k_val;
    let (height, width) = (rows * ch, task.n_way * cw);
    let mut pixels = vec![0u8; height * width];
    let mut place = |split: &TaskSplit, k: usize, row0: usize| {
        for j in 0..split.len() {
            let (class, r) = (split.labels[j], row0 + j % k);
            let (_, _, px) = sample_pixels(split.sample(j), shape, kind, lo, hi);
            for y in 0..ch {
                for x in 0..cw {
                    pixels[(r * ch + y) * width + class * cw + x] = quantize(px[y * cw + x]);
                }
            }
        }
    };
    place(&task.train, task.k_train, 0);
    if task.k_val > 0 {
        place(&task.val, task.k_val, task.k_train);
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    out
}

/// Writes one task directory.
pub fn dump_task(task: &MetaTask, kind: SampleKind, seed: u64, dir: impl AsRef<Path>) -> Result<TaskManifest> {
    let dir = dir.as_ref();
    task.validate()?;
    fs::create_dir_all(dir)?;
    let Provenance::Latent { policy, train, val } = &task.provenance else {
        return Err(Error::Config("only synthesised tasks can be dumped".into()));
    };
    let manifest = TaskManifest {
        n_way: task.n_way,
        k_train: task.k_train,
        k_val: task.k_val,
        policy: policy.clone(),
        seed,
        sample_kind: kind,
        sample_shape: task.train.sample_shape.clone(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&manifest)?)?;
    split_dataset(&task.train, task.n_way, kind)?.save(dir.join("train.ldat"))?;
    if !task.val.is_empty() {
        split_dataset(&task.val, task.n_way, kind)?.save(dir.join("val.ldat"))?;
    }
    let all: Vec<LatentVector> = train.iter().chain(val).cloned().collect();
    fs::write(dir.join("provenance.bin"), provenance_bytes(&all))?;
    fs::write(dir.join("contact.pgm"), contact_sheet(task, kind))?;
    Ok(manifest)
}

fn split_from(ds: &LabeledDataset) -> Result<TaskSplit> {
    TaskSplit::new(ds.sample_shape().to_vec(), ds.samples().data().to_vec(), ds.labels().to_vec())
}

/// Reads a task directory back. Image samples come back quantised to 1/255.
pub fn load_task_dump(dir: impl AsRef<Path>) -> Result<(TaskManifest, MetaTask)> {
    let dir = dir.as_ref();
    let manifest: TaskManifest = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let train = split_from(&LabeledDataset::load(dir.join("train.ldat"))?)?;
    let val = if manifest.k_val > 0 {
        split_from(&LabeledDataset::load(dir.join("val.ldat"))?)?
    } else {
        TaskSplit::new(manifest.sample_shape.clone(), Vec::new(), Vec::new())?
    };
    let mut latents = read_provenance(&fs::read(dir.join("provenance.bin"))?)?;
    if latents.len() != train.len() + val.len() {
        return Err(Error::BadShape(format!(
            "{} provenance vectors for {} samples",
            latents.len(),
            train.len() + val.len()
        )));
    }
    let val_z = latents.split_off(train.len());
    let task = MetaTask {
        n_way: manifest.n_way,
        k_train: manifest.k_train,
        k_val: manifest.k_val,
        train,
        val,
        provenance: Provenance::Latent { policy: manifest.policy.clone(), train: latents, val: val_z },
    };
    task.validate()?;
    Ok((manifest, task))
}

/// Parses a binary PGM header, returning `(width, height)`.
pub fn pgm_dimensions(bytes: &[u8]) -> Result<(usize, usize)> {
    let text = String::from_utf8_lossy(&bytes[..bytes.len().min(64)]);
    let mut parts = text.split_ascii_whitespace();
    if parts.next() != Some("P5") {
        return Err(Error::BadShape("not a binary PGM".into()));
    }
    let mut num =
        || parts.next().and_then(|s| s.parse::<usize>().ok()).ok_or_else(|| Error::BadShape("bad PGM header".into()));
    Ok((num()?, num()?))
}
