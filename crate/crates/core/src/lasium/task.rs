use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::genmodel::LatentVector;
use crate::numkit::tensor::numel;
use crate::numkit::Tensor;

/// One side (train or val) of a task: samples stored flat, labels `0..N`.
///
/// A split may be empty (`K_val = 0`), which a [`Tensor`] cannot represent,
/// hence the flat storage.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSplit {
    pub sample_shape: Vec<usize>,
    pub data: Vec<f64>,
    pub labels: Vec<usize>,
}

impl TaskSplit {
    pub fn new(sample_shape: Vec<usize>, data: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if data.len() != labels.len() * numel(&sample_shape) {
            return Err(dim_err(format!(
                "{} values for {} samples of shape {sample_shape:?}",
                data.len(),
                labels.len()
            )));
        }
        Ok(TaskSplit { sample_shape, data, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let w = numel(&self.sample_shape);
        &self.data[i * w..(i + 1) * w]
    }

    /// The samples as a `[len, ...sample_shape]` batch.
    pub fn batch(&self) -> Result<Tensor> {
        if self.is_empty() {
            return Err(Error::Config("empty task split has no batch".into()));
        }
        let mut shape = vec![self.len()];
        shape.extend_from_slice(&self.sample_shape);
        Tensor::new(shape, self.data.clone())
    }
}

/// Where a task's samples came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    /// Synthesised from latent vectors, aligned with the split samples.
    Latent { policy: String, train: Vec<LatentVector>, val: Vec<LatentVector> },
    /// Drawn from a labelled dataset. `classes[label]` is the original class id.
    Dataset { classes: Vec<usize>, train: Vec<usize>, val: Vec<usize> },
}

/// An N-way task with `k_train` train and `k_val` val samples per label.
///
/// Samples are group-major: all of label 0, then label 1, and so on.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaTask {
    pub n_way: usize,
    pub k_train: usize,
    pub k_val: usize,
    pub train: TaskSplit,
    pub val: TaskSplit,
    pub provenance: Provenance,
}

impl MetaTask {
    /// Checks label balance and provenance uniqueness.
    pub fn validate(&self) -> Result<()> {
        for (split, k, name) in [(&self.train, self.k_train, "train"), (&self.val, self.k_val, "val")] {
            let mut counts = vec![0usize; self.n_way];
            for &l in &split.labels {
                if l >= self.n_way {
                    return Err(Error::Config(format!("{name} label {l} outside 0..{}", self.n_way)));
                }
                counts[l] += 1;
            }
            if counts.iter().any(|&c| c != k) {
                return Err(Error::Config(format!("{name} label counts {counts:?}, expected {k} each")));
            }
        }
        match &self.provenance {
            Provenance::Latent { train, val, .. } => {
                if train.len() != self.train.len() || val.len() != self.val.len() {
                    return Err(Error::Config("provenance does not align with samples".into()));
                }
                let mut seen = HashSet::new();
                for z in train.iter().chain(val) {
                    let key: Vec<u64> = z.values().iter().map(|v| v.to_bits()).collect();
                    if !seen.insert(key) {
                        return Err(Error::Config("two samples share a latent provenance vector".into()));
                    }
                }
            }
            Provenance::Dataset { classes, train, val } => {
                if classes.len() != self.n_way || train.len() != self.train.len() || val.len() != self.val.len() {
                    return Err(Error::Config("provenance does not align with samples".into()));
                }
                let mut seen = HashSet::new();
                if !train.iter().chain(val).all(|i| seen.insert(*i)) {
                    return Err(Error::Config("a dataset sample appears twice in one task".into()));
                }
            }
        }
        Ok(())
    }
}
