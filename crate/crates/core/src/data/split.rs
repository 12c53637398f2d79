use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

/// Disjoint class-id sets for meta-training, meta-validation and meta-testing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaSplit {
    pub train_classes: Vec<usize>,
    pub val_classes: Vec<usize>,
    pub test_classes: Vec<usize>,
}

impl MetaSplit {
    pub fn part(&self, part: SplitPart) -> &[usize] {
        match part {
            SplitPart::Train => &self.train_classes,
            SplitPart::Val => &self.val_classes,
            SplitPart::Test => &self.test_classes,
        }
    }
}

/// Shuffles the class ids `0..n_classes` with `seed` and cuts the result into
/// contiguous parts. Boundaries sit at `round(cumulative fraction · n)`.
pub fn split_classes(n_classes: usize, fractions: [f64; 3], seed: u64) -> Result<MetaSplit> {
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::Config(format!("split fractions {fractions:?} must be non-negative")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions sum to {total}, not 1")));
    }
    let mut ids: Vec<usize> = (0..n_classes).collect();
    ids.shuffle(&mut stream(seed, domain::SPLIT, 0));

    let n = n_classes as f64;
    let a = (fractions[0] * n).round() as usize;
    let b = ((fractions[0] + fractions[1]) * n).round().min(n) as usize;
    let (train, rest) = ids.split_at(a.min(n_classes));
    let (val, test) = rest.split_at(b.saturating_sub(a).min(rest.len()));
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return Err(Error::Config(format!(
            "fractions {fractions:?} on {n_classes} classes leave an empty split ({}/{}/{})",
            train.len(),
            val.len(),
            test.len()
        )));
    }
    Ok(MetaSplit { train_classes: train.to_vec(), val_classes: val.to_vec(), test_classes: test.to_vec() })
}
