use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{LabeledDataset, SampleKind};
use crate::error::{Error, Result};
use crate::genmodel::{make_analytic_generator, AnalyticGenConfig, Generator, OutputMap};
use crate::numkit::Tensor;
use crate::rng::{domain, stream};

const MAX_DRAWS_PER_SAMPLE: usize = 100_000;

/// Geometry of a synthetic benchmark built on an analytic generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub latent_dim: usize,
    /// Class centres vary only in the first `signal_dims` latent coordinates.
    pub signal_dims: usize,
    /// Norm of every class centre.
    pub radius: f64,
    /// Minimum distance between centres.
    pub min_separation: f64,
    pub r_class: f64,
    /// Sample dimension after the random affine output map.
    pub out_dim: usize,
    /// Multiplier on the output-map columns of the non-signal coordinates.
    pub nuisance_scale: f64,
}

impl SyntheticSpec {
    pub fn new(n_classes: usize, per_class: usize, latent_dim: usize) -> Self {
        SyntheticSpec {
            n_classes,
            per_class,
            latent_dim,
            signal_dims: latent_dim,
            radius: 10.0,
            min_separation: 5.0,
            r_class: 1.0,
            out_dim: latent_dim,
            nuisance_scale: 1.0,
        }
    }
}

/// A labelled vector dataset plus the analytic generator it was decoded from.
///
/// Each sample decodes a latent drawn from `N(centre_c, r_class² · I)`,
/// redrawn until the class oracle returns `c`.
pub fn make_synthetic(
    n_classes: usize,
    per_class: usize,
    latent_dim: usize,
    seed: u64,
) -> Result<(LabeledDataset, Generator)> {
    make_synthetic_with(&SyntheticSpec::new(n_classes, per_class, latent_dim), seed)
}

pub fn make_synthetic_with(spec: &SyntheticSpec, seed: u64) -> Result<(LabeledDataset, Generator)> {
    if spec.n_classes < 5 || spec.per_class < 20 {
        return Err(Error::Config(format!(
            "synthetic benchmark needs >= 5 classes and >= 20 per class, got {} x {}",
            spec.n_classes, spec.per_class
        )));
    }
    let config = AnalyticGenConfig::sphere(
        spec.n_classes,
        spec.latent_dim,
        spec.signal_dims,
        spec.radius,
        spec.min_separation,
        spec.r_class,
        output_map(spec, &mut stream(seed, domain::SYNTH, 1))?,
        &mut stream(seed, domain::SYNTH, 0),
    )?;
    let gen = make_analytic_generator(&config, &mut stream(seed, domain::SYNTH, 1))?;
    let model = gen.analytic().expect("analytic generator");

    let mut rng = stream(seed, domain::SYNTH, 2);
    let mut latents = Vec::with_capacity(spec.n_classes * spec.per_class);
    let mut labels = Vec::with_capacity(latents.capacity());
    for c in 0..spec.n_classes {
        for _ in 0..spec.per_class {
            latents.push(model.sample_in_class(c, MAX_DRAWS_PER_SAMPLE, &mut rng)?);
            labels.push(c);
        }
    }
    let samples: Tensor = gen.generate_batch(&latents)?;
    let dataset = LabeledDataset::new(samples, labels, spec.n_classes, SampleKind::Vector)?;
    Ok((dataset, gen))
}

/// Random `N(0, 1 / latent_dim)` weights with the non-signal columns scaled.
fn output_map<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<OutputMap> {
    if spec.out_dim == 0 || !(spec.nuisance_scale.is_finite() && spec.nuisance_scale > 0.0) {
        return Err(Error::Config("synthetic out_dim and nuisance_scale must be positive".into()));
    }
    let d = spec.latent_dim;
    let s = 1.0 / (d as f64).sqrt();
    let weight = (0..spec.out_dim * d)
        .map(|k| {
            let w = s * rng.sample::<f64, _>(StandardNormal);
            if k % d >= spec.signal_dims {
                w * spec.nuisance_scale
            } else {
                w
            }
        })
        .collect();
    Ok(OutputMap::Affine { out_dim: spec.out_dim, weight, bias: vec![0.0; spec.out_dim] })
}
