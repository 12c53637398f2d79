use rand::seq::index::sample;
use rand::Rng;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::lasium::{MetaTask, Provenance, TaskSplit};

/// Draws an N-way task from real labelled classes.
///
/// `classes` is the pool to draw from (normally one part of a
/// [`MetaSplit`](super::MetaSplit)). Labels are re-indexed to `0..N` in the
/// order the classes were drawn.
pub fn sample_supervised_task<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    classes: &[usize],
    n_way: usize,
    k_train: usize,
    k_val: usize,
    rng: &mut R,
) -> Result<MetaTask> {
    if n_way < 2 || k_train < 1 {
        return Err(Error::Config(format!("need N >= 2 and K_tr >= 1, got N={n_way}, K_tr={k_train}")));
    }
    if classes.len() < n_way {
        return Err(Error::Config(format!("{} classes available for a {n_way}-way task", classes.len())));
    }
    let per_class = k_train + k_val;
    for &c in classes {
        if c >= dataset.n_classes() {
            return Err(Error::Config(format!("class {c} not in dataset")));
        }
        if dataset.class_indices(c).len() < per_class {
            return Err(Error::Config(format!(
                "class {c} has {} samples, task needs {per_class}",
                dataset.class_indices(c).len()
            )));
        }
    }

    let chosen: Vec<usize> = sample(rng, classes.len(), n_way).into_iter().map(|i| classes[i]).collect();
    let mut train_idx = Vec::with_capacity(n_way * k_train);
    let mut val_idx = Vec::with_capacity(n_way * k_val);
    for &c in &chosen {
        let pool = dataset.class_indices(c);
        let picks: Vec<usize> = sample(rng, pool.len(), per_class).into_iter().map(|i| pool[i]).collect();
        train_idx.extend_from_slice(&picks[..k_train]);
        val_idx.extend_from_slice(&picks[k_train..]);
    }

    let shape = dataset.sample_shape().to_vec();
    let gather = |idx: &[usize], k: usize| {
        let data = idx.iter().flat_map(|&i| dataset.samples().row(i).iter().copied()).collect();
        let labels = (0..idx.len()).map(|j| j / k.max(1)).collect();
        TaskSplit::new(shape.clone(), data, labels)
    };
    let task = MetaTask {
        n_way,
        k_train,
        k_val,
        train: gather(&train_idx, k_train)?,
        val: gather(&val_idx, k_val)?,
        provenance: Provenance::Dataset { classes: chosen, train: train_idx, val: val_idx },
    };
    Ok(task)
}
