//! Generators `G(z) → x` over a standard-normal latent space.
//!
//! Three realisations share one [`Generator`] type:
//! - a VAE (decoder plus encoder, posterior mean used for encoding),
//! - a small GAN (decoder only, behind the `gan` feature),
//! - an analytic generator whose latent space has known class centres and a
//!   [`class_oracle`], used to verify task synthesis.

mod analytic;
mod checkpoint;
#[cfg(feature = "gan")]
mod gan;
mod vae;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::SampleKind;
use crate::error::{dim_err, Error, Result};
use crate::numkit::{forward, NetworkParams, Tensor};

pub use analytic::{make_analytic_generator, AnalyticGenConfig, AnalyticModel, OutputMap, ORACLE_SLACK};
pub use checkpoint::{read_container, write_container, Container, ContainerKind, LGEN_MAGIC, LGEN_VERSION};
#[cfg(feature = "gan")]
pub use gan::{train_gan, GanConfig, GanTrace};
pub use vae::{train_vae, train_vae_traced, VaeConfig, VaeTrace};

/// A point in a generator's latent space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentVector {
    values: Vec<f64>,
}

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(dim_err("latent vector of dimension 0"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics("non-finite latent vector".into()));
        }
        Ok(LatentVector { values })
    }

    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        LatentVector { values }
    }

    /// A standard-normal draw.
    pub fn standard_normal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        LatentVector { values: (0..dim).map(|_| rng.sample(StandardNormal)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn distance(&self, other: &LatentVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// `self + t · (target − self)`.
    pub fn lerp(&self, target: &LatentVector, t: f64) -> LatentVector {
        let values = self.values.iter().zip(&target.values).map(|(a, b)| a + t * (b - a)).collect();
        LatentVector { values }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Vae,
    Gan,
    Analytic,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Body {
    Vae { encoder: NetworkParams, decoder: NetworkParams },
    Gan { decoder: NetworkParams },
    Analytic(AnalyticModel),
}

/// A trained or constructed generator. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    latent_dim: usize,
    sample_kind: SampleKind,
    sample_shape: Vec<usize>,
    eps_dist: Option<f64>,
    body: Body,
}

impl Generator {
    pub(crate) fn from_body(sample_kind: SampleKind, sample_shape: Vec<usize>, latent_dim: usize, body: Body) -> Self {
        Generator { latent_dim, sample_kind, sample_shape, eps_dist: None, body }
    }

    pub fn kind(&self) -> GeneratorKind {
        match self.body {
            Body::Vae { .. } => GeneratorKind::Vae,
            Body::Gan { .. } => GeneratorKind::Gan,
            Body::Analytic(_) => GeneratorKind::Analytic,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn sample_kind(&self) -> SampleKind {
        self.sample_kind
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn has_encoder(&self) -> bool {
        matches!(self.body, Body::Vae { .. })
    }

    pub fn analytic(&self) -> Option<&AnalyticModel> {
        match &self.body {
            Body::Analytic(m) => Some(m),
            _ => None,
        }
    }

    /// The calibrated anchor threshold, if one has been stored.
    pub fn eps_dist(&self) -> Option<f64> {
        self.eps_dist
    }

    pub fn set_eps_dist(&mut self, eps: f64) {
        self.eps_dist = Some(eps);
    }

    /// One draw from the latent prior. Network generators use `N(0, I)`; the
    /// analytic generator uses its class mixture.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> LatentVector {
        match &self.body {
            Body::Analytic(m) => m.sample_prior(rng),
            _ => LatentVector::standard_normal(self.latent_dim, rng),
        }
    }

    fn check_latent(&self, z: &LatentVector) -> Result<()> {
        if z.dim() != self.latent_dim {
            return Err(dim_err(format!("latent of dimension {} for a {}-d generator", z.dim(), self.latent_dim)));
        }
        Ok(())
    }

    /// `G(z)`, shaped like one sample.
    pub fn generate(&self, z: &LatentVector) -> Result<Tensor> {
        let batch = self.generate_batch(std::slice::from_ref(z))?;
        let shape = self.sample_shape.clone();
        batch.reshape(shape)
    }

    /// `G(z)` for each latent, stacked as `[n, ...sample_shape]`. Rows are
    /// computed independently, so this matches repeated [`generate`](Self::generate).
    pub fn generate_batch(&self, zs: &[LatentVector]) -> Result<Tensor> {
        if zs.is_empty() {
            return Err(dim_err("empty latent batch"));
        }
        for z in zs {
            self.check_latent(z)?;
        }
        let mut shape = vec![zs.len()];
        shape.extend_from_slice(&self.sample_shape);
        match &self.body {
            Body::Analytic(m) => {
                let data = zs.iter().flat_map(|z| m.map(z.values())).collect();
                Tensor::new(shape, data)
            }
            Body::Vae { decoder, .. } | Body::Gan { decoder } => {
                let data: Vec<f64> = zs.iter().flat_map(|z| z.values().iter().copied()).collect();
                let out = forward(decoder, &Tensor::new(vec![zs.len(), self.latent_dim], data)?)?;
                let out = match self.sample_kind {
                    SampleKind::Image => out.map(|v| crate::numkit::autodiff::stable_sigmoid(v).clamp(0.0, 1.0)),
                    SampleKind::Vector => out,
                };
                out.reshape(shape)
            }
        }
    }

    /// Posterior mean of the VAE encoder.
    pub fn encode(&self, sample: &Tensor) -> Result<LatentVector> {
        let mut shape = vec![1];
        shape.extend_from_slice(&self.sample_shape);
        if sample.shape() != self.sample_shape.as_slice() && sample.shape() != shape.as_slice() {
            return Err(dim_err(format!(
                "sample of shape {:?} for generator shape {:?}",
                sample.shape(),
                self.sample_shape
            )));
        }
        let batch = Tensor::new(shape, sample.data().to_vec())?;
        Ok(self.encode_batch(&batch)?.remove(0))
    }

    /// Posterior means for a `[n, ...sample_shape]` batch.
    pub fn encode_batch(&self, batch: &Tensor) -> Result<Vec<LatentVector>> {
        let Body::Vae { encoder, .. } = &self.body else {
            return Err(Error::UnsupportedOperation(format!("encode on a {:?} generator", self.kind())));
        };
        if &batch.shape()[1..] != self.sample_shape.as_slice() {
            return Err(dim_err(format!(
                "batch of shape {:?} for generator shape {:?}",
                batch.shape(),
                self.sample_shape
            )));
        }
        let stats = forward(encoder, batch)?;
        let l = self.latent_dim;
        Ok((0..stats.rows()).map(|i| LatentVector::from_vec(stats.row(i)[..l].to_vec())).collect())
    }
}

/// Class of the nearest centre, or `None` beyond `ORACLE_SLACK · r_class`.
pub fn class_oracle(gen: &Generator, z: &LatentVector) -> Result<Option<usize>> {
    let Some(m) = gen.analytic() else {
        return Err(Error::UnsupportedOperation(format!("class oracle on a {:?} generator", gen.kind())));
    };
    gen.check_latent(z)?;
    Ok(m.classify(z.values()))
}

/// Number of prior-draw pairs used for the default anchor threshold.
pub const CALIBRATION_PAIRS: usize = 10_000;

/// Default anchor threshold: the 30th percentile (nearest rank) of distances
/// between independent pairs of prior draws.
pub fn calibrate_eps_dist<R: Rng + ?Sized>(gen: &Generator, pairs: usize, rng: &mut R) -> f64 {
    let mut d: Vec<f64> = (0..pairs.max(1))
        .map(|_| {
            let a = gen.sample_prior(rng);
            let b = gen.sample_prior(rng);
            a.distance(&b)
        })
        .collect();
    percentile_nearest_rank(&mut d, 0.30)
}

/// Nearest-rank percentile: the value at rank `ceil(p · n)` of the sorted list.
pub fn percentile_nearest_rank(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    values[rank - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lerp_endpoints() {
        let a = LatentVector::new(vec![0.0, 0.0]).unwrap();
        let b = LatentVector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(a.lerp(&b, 0.4).values(), &[0.4, 0.4]);
        assert_eq!(a.lerp(&b, 0.0), a);
        assert_eq!(a.lerp(&b, 1.0), b);
    }

    #[test]
    fn latent_validation() {
        assert!(LatentVector::new(vec![]).is_err());
        assert!(LatentVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn nearest_rank() {
        let mut v = vec![5.0, 1.0, 4.0, 2.0, 3.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(percentile_nearest_rank(&mut v, 0.30), 3.0);
        let mut one = vec![2.5];
        assert_eq!(percentile_nearest_rank(&mut one, 0.30), 2.5);
    }
}
