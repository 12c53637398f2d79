use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Body, Generator, LatentVector};
use crate::data::SampleKind;
use crate::error::{Error, Result};

/// `class_oracle` accepts points within this many class radii of a centre.
pub const ORACLE_SLACK: f64 = 3.0;

/// Affine map from latent space to sample space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum OutputMap {
    Identity,
    /// `x = W z + b` with `W` stored row-major as `[out_dim, latent_dim]`.
    Affine {
        out_dim: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    /// Weights drawn from `N(0, 1 / latent_dim)` and zero bias when the
    /// generator is built.
    Random {
        out_dim: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticGenConfig {
    pub latent_dim: usize,
    pub centers: Vec<Vec<f64>>,
    pub r_class: f64,
    pub output: OutputMap,
}

impl AnalyticGenConfig {
    pub fn n_true_classes(&self) -> usize {
        self.centers.len()
    }

    /// Centres drawn uniformly on the sphere of `radius` restricted to the
    /// first `signal_dims` coordinates, each at least `min_separation` from
    /// the others. Fails with a config error if they cannot be placed.
    #[allow(clippy::too_many_arguments)]
    pub fn sphere<R: Rng + ?Sized>(
        n_classes: usize,
        latent_dim: usize,
        signal_dims: usize,
        radius: f64,
        min_separation: f64,
        r_class: f64,
        output: OutputMap,
        rng: &mut R,
    ) -> Result<Self> {
        if signal_dims == 0 || signal_dims > latent_dim {
            return Err(Error::Config(format!("signal_dims {signal_dims} outside 1..={latent_dim}")));
        }
        const ATTEMPTS: usize = 10_000;
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(n_classes);
        let mut attempts = 0;
        while centers.len() < n_classes {
            attempts += 1;
            if attempts > ATTEMPTS * n_classes.max(1) {
                return Err(Error::Config(format!(
                    "cannot place {n_classes} centres {min_separation} apart on a radius-{radius} sphere in {signal_dims} dimensions"
                )));
            }
            let mut c: Vec<f64> = (0..signal_dims).map(|_| rng.sample(StandardNormal)).collect();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            c.iter_mut().for_each(|v| *v *= radius / norm);
            c.resize(latent_dim, 0.0);
            if centers.iter().all(|o| dist(o, &c) >= min_separation) {
                centers.push(c);
            }
        }
        Ok(AnalyticGenConfig { latent_dim, centers, r_class, output })
    }

    fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        if self.centers.is_empty() {
            return Err(Error::Config("analytic generator needs at least one class".into()));
        }
        if !(self.r_class.is_finite() && self.r_class > 0.0) {
            return Err(Error::Config(format!("r_class must be positive, got {}", self.r_class)));
        }
        for c in &self.centers {
            if c.len() != self.latent_dim || c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("centre {c:?} is not a finite {}-vector", self.latent_dim)));
            }
        }
        for i in 0..self.centers.len() {
            for j in i + 1..self.centers.len() {
                let d = dist(&self.centers[i], &self.centers[j]);
                if d <= 4.0 * self.r_class {
                    return Err(Error::Config(format!(
                        "centres {i} and {j} are {d} apart, separability needs > {}",
                        4.0 * self.r_class
                    )));
                }
            }
        }
        if let OutputMap::Affine { out_dim, weight, bias } = &self.output {
            if *out_dim == 0 || weight.len() != out_dim * self.latent_dim || bias.len() != *out_dim {
                return Err(Error::Config("affine output map has inconsistent sizes".into()));
            }
        }
        Ok(())
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The resolved analytic generator: class centres plus a concrete affine map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticModel {
    pub centers: Vec<Vec<f64>>,
    pub r_class: f64,
    pub out_dim: usize,
    /// `[out_dim, latent_dim]`, row-major; `None` means identity.
    pub weight: Option<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl AnalyticModel {
    fn latent_dim(&self) -> usize {
        self.centers[0].len()
    }

    pub(crate) fn map(&self, z: &[f64]) -> Vec<f64> {
        match &self.weight {
            None => z.iter().zip(&self.bias).map(|(v, b)| v + b).collect(),
            Some(w) => {
                let d = self.latent_dim();
                (0..self.out_dim)
                    .map(|o| w[o * d..(o + 1) * d].iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + self.bias[o])
                    .collect()
            }
        }
    }

    /// Nearest centre (lowest id on ties) if within the slack radius.
    pub fn classify(&self, z: &[f64]) -> Option<usize> {
        let mut best = (f64::INFINITY, 0);
        for (i, c) in self.centers.iter().enumerate() {
            let d = dist(c, z);
            if d < best.0 {
                best = (d, i);
            }
        }
        (best.0 <= ORACLE_SLACK * self.r_class).then_some(best.1)
    }

    /// Uniform class, then `centre + N(0, (r_class² / d) · I)`, so the
    /// expected squared offset from the centre is `r_class²`.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> LatentVector {
        let c = &self.centers[rng.random_range(0..self.centers.len())];
        let s = self.r_class / (c.len() as f64).sqrt();
        LatentVector::from_vec(c.iter().map(|&v| v + s * rng.sample::<f64, _>(StandardNormal)).collect())
    }

    /// `centre_c + N(0, r_class² · I)`, redrawn until the oracle agrees with `c`.
    pub fn sample_in_class<R: Rng + ?Sized>(&self, c: usize, max_attempts: usize, rng: &mut R) -> Result<LatentVector> {
        let center = &self.centers[c];
        for _ in 0..max_attempts {
            let z: Vec<f64> = center.iter().map(|&v| v + self.r_class * rng.sample::<f64, _>(StandardNormal)).collect();
            if self.classify(&z) == Some(c) {
                return Ok(LatentVector::from_vec(z));
            }
        }
        Err(Error::Config(format!("no draw around centre {c} classified back to it in {max_attempts} attempts")))
    }
}

/// Builds an analytic generator. `rng` resolves a random output map.
pub fn make_analytic_generator<R: Rng + ?Sized>(config: &AnalyticGenConfig, rng: &mut R) -> Result<Generator> {
    config.validate()?;
    let d = config.latent_dim;
    let (out_dim, weight, bias) = match &config.output {
        OutputMap::Identity => (d, None, vec![0.0; d]),
        OutputMap::Affine { out_dim, weight, bias } => (*out_dim, Some(weight.clone()), bias.clone()),
        OutputMap::Random { out_dim } => {
            if *out_dim == 0 {
                return Err(Error::Config("output dimension must be positive".into()));
            }
            let s = 1.0 / (d as f64).sqrt();
            let w = (0..out_dim * d).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect();
            (*out_dim, Some(w), vec![0.0; *out_dim])
        }
    };
    let model = AnalyticModel { centers: config.centers.clone(), r_class: config.r_class, out_dim, weight, bias };
    Ok(Generator::from_body(SampleKind::Vector, vec![out_dim], d, Body::Analytic(model)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genmodel::class_oracle;
    use crate::rng::from_seed;

    fn two_class() -> Generator {
        let mut e = vec![0.0; 3];
        e[0] = 10.0;
        let cfg = AnalyticGenConfig {
            latent_dim: 3,
            centers: vec![e.clone(), e.iter().map(|v| -v).collect()],
            r_class: 1.0,
            output: OutputMap::Identity,
        };
        make_analytic_generator(&cfg, &mut from_seed(0)).unwrap()
    }

    fn z(v: &[f64]) -> LatentVector {
        LatentVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn opposite_centres_are_valid() {
        let g = two_class();
        assert_eq!(g.latent_dim(), 3);
        assert_eq!(g.sample_shape(), &[3]);
    }

    #[test]
    fn coincident_centres_rejected() {
        let cfg = AnalyticGenConfig {
            latent_dim: 2,
            centers: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            r_class: 1.0,
            output: OutputMap::Identity,
        };
        assert!(matches!(make_analytic_generator(&cfg, &mut from_seed(0)), Err(Error::Config(_))));
    }

    #[test]
    fn sphere_centres_separated() {
        let cfg = AnalyticGenConfig::sphere(8, 16, 16, 10.0, 0.0, 1.0, OutputMap::Identity, &mut from_seed(5)).unwrap();
        let mut min = f64::INFINITY;
        for i in 0..8 {
            let ni = cfg.centers[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((ni - 10.0).abs() < 1e-9);
            for j in i + 1..8 {
                min = min.min(dist(&cfg.centers[i], &cfg.centers[j]));
            }
        }
        assert!(min > 4.0, "{min}");
        make_analytic_generator(&cfg, &mut from_seed(0)).unwrap();
    }

    #[test]
    fn identity_map_is_exact() {
        let g = two_class();
        let v = z(&[0.25, -3.0, 7.5]);
        assert_eq!(g.generate(&v).unwrap().data(), v.values());
        assert_eq!(g.generate(&v).unwrap(), g.generate(&v).unwrap());
    }

    #[test]
    fn affine_map() {
        let cfg = AnalyticGenConfig {
            latent_dim: 2,
            centers: vec![vec![10.0, 0.0], vec![-10.0, 0.0]],
            r_class: 1.0,
            output: OutputMap::Affine { out_dim: 1, weight: vec![2.0, -1.0], bias: vec![0.5] },
        };
        let g = make_analytic_generator(&cfg, &mut from_seed(0)).unwrap();
        assert_eq!(g.generate(&z(&[1.0, 3.0])).unwrap().data(), &[2.0 - 3.0 + 0.5]);
    }

    #[test]
    fn oracle_examples() {
        let g = two_class();
        assert_eq!(class_oracle(&g, &z(&[10.0, 0.0, 0.0])).unwrap(), Some(0));
        assert_eq!(class_oracle(&g, &z(&[-10.0, 0.0, 0.0])).unwrap(), Some(1));
        assert_eq!(class_oracle(&g, &z(&[0.0, 0.0, 0.0])).unwrap(), None);
        assert_eq!(class_oracle(&g, &z(&[10.0, 0.5, 0.0])).unwrap(), Some(0));
        assert!(class_oracle(&g, &z(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn in_class_draws_agree_with_oracle() {
        let g = two_class();
        let m = g.analytic().unwrap();
        let mut rng = from_seed(3);
        for c in [0, 1] {
            for _ in 0..100 {
                let v = m.sample_in_class(c, 1000, &mut rng).unwrap();
                assert_eq!(m.classify(v.values()), Some(c));
            }
        }
    }
}
