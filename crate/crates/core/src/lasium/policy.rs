use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::anchors::too_close;
use crate::error::{Error, Result};
use crate::genmodel::{Generator, LatentVector};

/// Which in-class candidate rule to use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum PolicyKind {
    /// `z' = z + N(0, σ² I)`.
    Noise { sigma: f64 },
    /// `z' = z + α (v − z)` toward a fresh out-of-class prior draw `v`.
    RandomOut { alpha: f64 },
    /// `z' = z + α (t − z)` toward a vector already chosen for another class.
    OtherClasses { alpha: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskPolicy {
    pub kind: PolicyKind,
    /// Minimum pairwise anchor distance; also the out-of-class margin for `v`.
    pub eps_dist: f64,
    /// Prior draws allowed per anchor (or per `v`) before giving up.
    pub max_attempts: usize,
}

impl TaskPolicy {
    pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

    pub fn new(kind: PolicyKind, eps_dist: f64, max_attempts: usize) -> Result<Self> {
        let p = TaskPolicy { kind, eps_dist, max_attempts };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            PolicyKind::Noise { sigma } if !(sigma.is_finite() && sigma > 0.0) => {
                return Err(Error::Config(format!("noise sigma must be finite and positive, got {sigma}")));
            }
            PolicyKind::RandomOut { alpha } | PolicyKind::OtherClasses { alpha } if !(alpha > 0.0 && alpha <= 1.0) => {
                return Err(Error::Config(format!("alpha must lie in (0, 1], got {alpha}")));
            }
            _ => {}
        }
        if !(self.eps_dist.is_finite() && self.eps_dist >= 0.0) {
            return Err(Error::Config(format!("eps_dist must be finite and non-negative, got {}", self.eps_dist)));
        }
        if self.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    /// Short label recorded in task provenance, e.g. `lasium-ro(alpha=0.4)`.
    pub fn tag(&self) -> String {
        match self.kind {
            PolicyKind::Noise { sigma } => format!("lasium-n(sigma={sigma})"),
            PolicyKind::RandomOut { alpha } => format!("lasium-ro(alpha={alpha})"),
            PolicyKind::OtherClasses { alpha } => format!("lasium-oc(alpha={alpha})"),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    // Zero is accepted here so the endpoint identities can be exercised.
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// Adds independent `N(0, σ²)` noise to every coordinate of every anchor.
pub fn policy_noise<R: Rng + ?Sized>(anchors: &[LatentVector], sigma: f64, rng: &mut R) -> Result<Vec<LatentVector>> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Config(format!("sigma must be finite and non-negative, got {sigma}")));
    }
    Ok(anchors
        .iter()
        .map(|z| {
            let values = z.values().iter().map(|&v| v + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
            LatentVector::from_vec(values)
        })
        .collect())
}

/// Draws a prior point at least `eps_dist` from every anchor.
pub fn sample_out_of_class<R: Rng + ?Sized>(
    gen: &Generator,
    anchors: &[LatentVector],
    eps_dist: f64,
    max_attempts: usize,
    rng: &mut R,
) -> Result<LatentVector> {
    for _ in 0..max_attempts {
        let v = gen.sample_prior(rng);
        if !too_close(&v, anchors, eps_dist) {
            return Ok(v);
        }
    }
    Err(Error::AnchorRejectionExhausted { attempts: max_attempts })
}

/// Moves each anchor a fraction `alpha` toward its own fresh out-of-class draw.
pub fn policy_random_out<R: Rng + ?Sized>(
    anchors: &[LatentVector],
    alpha: f64,
    gen: &Generator,
    eps_dist: f64,
    max_attempts: usize,
    rng: &mut R,
) -> Result<Vec<LatentVector>> {
    check_alpha(alpha)?;
    anchors
        .iter()
        .map(|z| Ok(z.lerp(&sample_out_of_class(gen, anchors, eps_dist, max_attempts, rng)?, alpha)))
        .collect()
}

/// Index of the anchor that anchor `i` moves toward in round `omega`.
///
/// Rounds cycle through the other `n − 1` anchors in index order, starting
/// with `i + 1`.
pub fn other_class_target(i: usize, omega: usize, n: usize) -> usize {
    let offset = (omega - 1) % (n - 1) + 1;
    (i + offset) % n
}

/// Moves each anchor a fraction `alpha` toward another anchor, chosen by
/// [`other_class_target`].
pub fn policy_other_classes(anchors: &[LatentVector], alpha: f64, omega: usize) -> Result<Vec<LatentVector>> {
    check_alpha(alpha)?;
    let n = anchors.len();
    if n < 2 {
        return Err(Error::Config(format!("other-classes policy needs N >= 2, got {n}")));
    }
    if omega == 0 {
        return Err(Error::Config("round index omega starts at 1".into()));
    }
    Ok((0..n).map(|i| anchors[i].lerp(&anchors[other_class_target(i, omega, n)], alpha)).collect())
}
