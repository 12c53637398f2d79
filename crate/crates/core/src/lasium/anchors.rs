use rand::Rng;

use crate::error::{Error, Result};
use crate::genmodel::{Generator, LatentVector};
use crate::numkit::Tensor;

/// `N` latent anchors, pairwise at least `eps_dist` apart.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorSet {
    pub vectors: Vec<LatentVector>,
    /// For anchors embedded from data: the dataset rows they came from.
    pub source_indices: Option<Vec<usize>>,
    /// For anchors embedded from data: the samples themselves.
    pub sources: Option<Vec<Vec<f64>>>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..self.vectors.len() {
            for j in i + 1..self.vectors.len() {
                min = min.min(self.vectors[i].distance(&self.vectors[j]));
            }
        }
        min
    }
}

pub(crate) fn too_close(z: &LatentVector, others: &[LatentVector], eps: f64) -> bool {
    others.iter().any(|o| z.distance(o) < eps)
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Config(format!("a task needs N >= 2 anchors, got {n}")));
    }
    Ok(())
}

/// Rejection-samples `n` anchors from the generator's prior.
///
/// Anchors are filled one slot at a time; a slot gets up to `max_attempts`
/// draws before the whole call fails.
pub fn sample_anchors<R: Rng + ?Sized>(
    gen: &Generator,
    n: usize,
    eps_dist: f64,
    max_attempts: usize,
    rng: &mut R,
) -> Result<AnchorSet> {
    check_n(n)?;
    let mut vectors: Vec<LatentVector> = Vec::with_capacity(n);
    while vectors.len() < n {
        let mut placed = false;
        for _ in 0..max_attempts {
            let z = gen.sample_prior(rng);
            if !too_close(&z, &vectors, eps_dist) {
                vectors.push(z);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::AnchorRejectionExhausted { attempts: max_attempts });
        }
    }
    Ok(AnchorSet { vectors, source_indices: None, sources: None })
}

/// Rejection-samples `n` distinct rows of `data`, keeping them only if their
/// encodings (posterior means) are pairwise at least `eps_dist` apart.
pub fn sample_anchors_from_data<R: Rng + ?Sized>(
    gen: &Generator,
    data: &Tensor,
    n: usize,
    eps_dist: f64,
    max_attempts: usize,
    rng: &mut R,
) -> Result<AnchorSet> {
    check_n(n)?;
    if !gen.has_encoder() {
        return Err(Error::UnsupportedOperation(format!("anchors from data need an encoder, got {:?}", gen.kind())));
    }
    if data.rows() < n {
        return Err(Error::Config(format!("{} samples cannot supply {n} distinct anchors", data.rows())));
    }
    let mut vectors: Vec<LatentVector> = Vec::with_capacity(n);
    let mut indices: Vec<usize> = Vec::with_capacity(n);
    while vectors.len() < n {
        let mut placed = false;
        for _ in 0..max_attempts {
            let idx = rng.random_range(0..data.rows());
            if indices.contains(&idx) {
                continue;
            }
            let z = gen.encode(&data.select_rows(&[idx]))?;
            if !too_close(&z, &vectors, eps_dist) {
                vectors.push(z);
                indices.push(idx);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::AnchorRejectionExhausted { attempts: max_attempts });
        }
    }
    let sources = indices.iter().map(|&i| data.row(i).to_vec()).collect();
    Ok(AnchorSet { vectors, source_indices: Some(indices), sources: Some(sources) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SampleKind;
    use crate::genmodel::{make_analytic_generator, train_vae, AnalyticGenConfig, OutputMap, VaeConfig};
    use crate::rng::from_seed;
    use rand::SeedableRng;

    fn gen(d: usize) -> Generator {
        // A single-class analytic generator would not be standard normal, so
        // use an untrained VAE decoder: its prior is N(0, I).
        let x = Tensor::randn(&[4, 3], 1.0, &mut from_seed(0));
        let cfg = VaeConfig { latent_dim: d, hidden: vec![4], epochs: 1, batch_size: 4, ..VaeConfig::default() };
        train_vae(&x, SampleKind::Vector, &cfg, &mut from_seed(1)).unwrap()
    }

    #[test]
    fn zero_threshold_takes_first_draws() {
        let g = gen(3);
        let set = sample_anchors(&g, 4, 0.0, 1, &mut from_seed(5)).unwrap();
        let mut rng = from_seed(5);
        let expected: Vec<LatentVector> = (0..4).map(|_| g.sample_prior(&mut rng)).collect();
        assert_eq!(set.vectors, expected);
    }

    #[test]
    fn unsatisfiable_threshold() {
        let g = gen(3);
        let err = sample_anchors(&g, 3, 1e6, 10, &mut from_seed(5)).unwrap_err();
        assert!(matches!(err, Error::AnchorRejectionExhausted { attempts: 10 }));
    }

    #[test]
    fn high_dimensional_pairs_mostly_clear_threshold() {
        // Pair distance concentrates near sqrt(2d) = 32 for d = 512.
        let d = 512;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let trials = 100_000;
        let mut ok = 0;
        for _ in 0..trials {
            let a = LatentVector::standard_normal(d, &mut rng);
            let b = LatentVector::standard_normal(d, &mut rng);
            if a.distance(&b) >= 20.0 {
                ok += 1;
            }
        }
        assert!(ok as f64 / trials as f64 > 0.99);
    }

    #[test]
    fn data_anchors_are_encodings_of_distinct_rows() {
        let x = Tensor::randn(&[6, 3], 3.0, &mut from_seed(2));
        let cfg = VaeConfig { latent_dim: 2, hidden: vec![8], epochs: 20, batch_size: 6, ..VaeConfig::default() };
        let g = train_vae(&x, SampleKind::Vector, &cfg, &mut from_seed(3)).unwrap();
        for seed in 0..20 {
            let set = sample_anchors_from_data(&g, &x, 6, 0.0, 100, &mut from_seed(seed)).unwrap();
            let idx = set.source_indices.clone().unwrap();
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..6).collect::<Vec<_>>());
            for (k, &i) in idx.iter().enumerate() {
                assert_eq!(set.vectors[k], g.encode(&x.select_rows(&[i])).unwrap());
            }
        }
        assert!(matches!(sample_anchors_from_data(&g, &x, 7, 0.0, 100, &mut from_seed(0)), Err(Error::Config(_))));
    }

    #[test]
    fn duplicate_rows_never_picked_twice() {
        let row = [0.5, 0.5, 0.5];
        let x = Tensor::new(vec![4, 3], row.repeat(4)).unwrap();
        let cfg = VaeConfig { latent_dim: 2, hidden: vec![4], epochs: 1, batch_size: 4, ..VaeConfig::default() };
        let g = train_vae(&x, SampleKind::Vector, &cfg, &mut from_seed(3)).unwrap();
        let set = sample_anchors_from_data(&g, &x, 4, 0.0, 1000, &mut from_seed(1)).unwrap();
        let mut idx = set.source_indices.unwrap();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn analytic_encode_unsupported() {
        let cfg = AnalyticGenConfig {
            latent_dim: 1,
            centers: vec![vec![-10.0], vec![10.0]],
            r_class: 1.0,
            output: OutputMap::Identity,
        };
        let g = make_analytic_generator(&cfg, &mut from_seed(0)).unwrap();
        let x = Tensor::zeros(&[3, 1]);
        assert!(matches!(
            sample_anchors_from_data(&g, &x, 2, 0.0, 10, &mut from_seed(0)),
            Err(Error::UnsupportedOperation(_))
        ));
    }
}
