use rand::Rng;
use rayon::prelude::*;

use super::anchors::{sample_anchors, sample_anchors_from_data, AnchorSet};
use super::policy::{other_class_target, policy_noise, policy_random_out, PolicyKind, TaskPolicy};
use super::task::{MetaTask, Provenance, TaskSplit};
use crate::error::{Error, Result};
use crate::genmodel::{Generator, LatentVector};
use crate::numkit::Tensor;
use crate::rng::{domain, stream, Rng as StreamRng};

/// Where anchors come from.
#[derive(Clone, Copy, Debug)]
pub enum AnchorSource<'a> {
    /// Rejection sampling from the generator's prior.
    Prior,
    /// Encodings of dataset rows; the original rows replace the anchors'
    /// generated samples.
    Data(&'a Tensor),
}

/// `N_MB` tasks, each built from its own random stream.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaBatch {
    pub tasks: Vec<MetaTask>,
}

impl MetaBatch {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// The latent groups of one task: `groups[i]` is class `i`'s sequence
/// `[anchor, candidate_1, …]`.
pub(crate) fn latent_groups<R: Rng + ?Sized>(
    gen: &Generator,
    policy: &TaskPolicy,
    anchors: &AnchorSet,
    per_class: usize,
    rng: &mut R,
) -> Result<Vec<Vec<LatentVector>>> {
    let n = anchors.len();
    let z = &anchors.vectors;
    let mut groups: Vec<Vec<LatentVector>> = z.iter().map(|a| vec![a.clone()]).collect();
    for omega in 1..per_class {
        let round = match policy.kind {
            PolicyKind::Noise { sigma } => policy_noise(z, sigma, rng)?,
            PolicyKind::RandomOut { alpha } => {
                policy_random_out(z, alpha, gen, policy.eps_dist, policy.max_attempts, rng)?
            }
            PolicyKind::OtherClasses { alpha } => {
                // Each pass over the other N − 1 classes moves to the next
                // vector already chosen for them, so no candidate repeats.
                let pass = (omega - 1) / (n - 1);
                (0..n).map(|i| z[i].lerp(&groups[other_class_target(i, omega, n)][pass], alpha)).collect()
            }
        };
        for (g, c) in groups.iter_mut().zip(round) {
            g.push(c);
        }
    }
    Ok(groups)
}

/// Builds one N-way task from the generator.
pub fn generate_task<R: Rng + ?Sized>(
    gen: &Generator,
    policy: &TaskPolicy,
    n_way: usize,
    k_train: usize,
    k_val: usize,
    rng: &mut R,
) -> Result<MetaTask> {
    generate_task_with(gen, policy, AnchorSource::Prior, n_way, k_train, k_val, rng)
}

pub fn generate_task_with<R: Rng + ?Sized>(
    gen: &Generator,
    policy: &TaskPolicy,
    source: AnchorSource<'_>,
    n_way: usize,
    k_train: usize,
    k_val: usize,
    rng: &mut R,
) -> Result<MetaTask> {
    policy.validate()?;
    if n_way < 2 || k_train < 1 {
        return Err(Error::Config(format!("need N >= 2 and K_tr >= 1, got N={n_way}, K_tr={k_train}")));
    }
    let anchors = match source {
        AnchorSource::Prior => sample_anchors(gen, n_way, policy.eps_dist, policy.max_attempts, rng)?,
        AnchorSource::Data(data) => {
            sample_anchors_from_data(gen, data, n_way, policy.eps_dist, policy.max_attempts, rng)?
        }
    };
    let groups = latent_groups(gen, policy, &anchors, k_train + k_val, rng)?;

    let mut train_z = Vec::with_capacity(n_way * k_train);
    let mut val_z = Vec::with_capacity(n_way * k_val);
    for g in &groups {
        train_z.extend_from_slice(&g[..k_train]);
        val_z.extend_from_slice(&g[k_train..]);
    }
    let shape = gen.sample_shape().to_vec();
    let mut train_data = gen.generate_batch(&train_z)?.into_data();
    if let Some(sources) = &anchors.sources {
        let w = train_data.len() / train_z.len();
        for (i, s) in sources.iter().enumerate() {
            let at = i * k_train * w;
            train_data[at..at + w].copy_from_slice(s);
        }
    }
    let val_data = if val_z.is_empty() { Vec::new() } else { gen.generate_batch(&val_z)?.into_data() };
    let labels = |k: usize| (0..n_way * k).map(|j| j / k).collect::<Vec<_>>();

    Ok(MetaTask {
        n_way,
        k_train,
        k_val,
        train: TaskSplit::new(shape.clone(), train_data, labels(k_train))?,
        val: TaskSplit::new(shape, val_data, if k_val == 0 { Vec::new() } else { labels(k_val) })?,
        provenance: Provenance::Latent { policy: policy.tag(), train: train_z, val: val_z },
    })
}

/// The random stream owned by task `index` of a batch seeded with `base`.
pub fn task_stream(base: u64, index: usize) -> StreamRng {
    stream(base, domain::TASK, index as u64)
}

/// `n_mb` independent tasks. A base seed is drawn from `rng`, and task `i`
/// uses [`task_stream`]`(base, i)`, so the batch is identical whether tasks
/// are built serially or in parallel.
#[allow(clippy::too_many_arguments)]
pub fn generate_meta_batch<R: Rng + ?Sized>(
    gen: &Generator,
    policy: &TaskPolicy,
    source: AnchorSource<'_>,
    n_way: usize,
    k_train: usize,
    k_val: usize,
    n_mb: usize,
    rng: &mut R,
) -> Result<MetaBatch> {
    let base: u64 = rng.random();
    let tasks = (0..n_mb)
        .into_par_iter()
        .map(|i| generate_task_with(gen, policy, source, n_way, k_train, k_val, &mut task_stream(base, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetaBatch { tasks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SampleKind;
    use crate::genmodel::{make_analytic_generator, train_vae, AnalyticGenConfig, OutputMap, VaeConfig};
    use crate::rng::from_seed;

    fn analytic() -> Generator {
        let cfg =
            AnalyticGenConfig::sphere(8, 16, 16, 10.0, 10.0, 1.0, OutputMap::Identity, &mut from_seed(2)).unwrap();
        make_analytic_generator(&cfg, &mut from_seed(0)).unwrap()
    }

    fn policies() -> Vec<TaskPolicy> {
        [
            PolicyKind::Noise { sigma: 0.5 },
            PolicyKind::RandomOut { alpha: 0.4 },
            PolicyKind::OtherClasses { alpha: 0.2 },
        ]
        .into_iter()
        .map(|k| TaskPolicy::new(k, 5.0, 1000).unwrap())
        .collect()
    }

    #[test]
    fn five_way_one_shot_fifteen_val() {
        let g = analytic();
        for p in policies() {
            let mut rng = from_seed(1);
            let t = generate_task(&g, &p, 5, 1, 15, &mut rng).unwrap();
            assert_eq!(t.train.len(), 5);
            assert_eq!(t.val.len(), 75);
            t.validate().unwrap();
            let Provenance::Latent { train, val, .. } = &t.provenance else { unreachable!() };
            assert_eq!(train.len() + val.len(), 5 * 16);
        }
    }

    #[test]
    fn anchors_lead_their_groups() {
        let g = analytic();
        let p = policies()[1];
        let t = generate_task(&g, &p, 4, 2, 3, &mut from_seed(3)).unwrap();
        let mut rng = from_seed(3);
        let anchors = sample_anchors(&g, 4, p.eps_dist, p.max_attempts, &mut rng).unwrap();
        let Provenance::Latent { train, .. } = &t.provenance else { unreachable!() };
        for i in 0..4 {
            assert_eq!(train[2 * i], anchors.vectors[i]);
            assert_eq!(t.train.sample(2 * i), g.generate(&anchors.vectors[i]).unwrap().data());
        }
    }

    #[test]
    fn other_classes_provenance_stays_unique() {
        let g = analytic();
        let p = policies()[2];
        for n in [2, 3, 5] {
            let t = generate_task(&g, &p, n, 1, 9, &mut from_seed(n as u64)).unwrap();
            t.validate().unwrap();
        }
    }

    #[test]
    fn empty_val_split() {
        let g = analytic();
        let t = generate_task(&g, &policies()[0], 3, 2, 0, &mut from_seed(0)).unwrap();
        assert!(t.val.is_empty());
        t.validate().unwrap();
    }

    #[test]
    fn meta_batch_matches_task_streams() {
        let g = analytic();
        let p = policies()[1];
        let batch = generate_meta_batch(&g, &p, AnchorSource::Prior, 5, 1, 5, 4, &mut from_seed(8)).unwrap();
        assert_eq!(batch.len(), 4);
        let base: u64 = from_seed(8).random();
        let single = generate_task(&g, &p, 5, 1, 5, &mut task_stream(base, 0)).unwrap();
        assert_eq!(batch.tasks[0], single);
        let again = generate_meta_batch(&g, &p, AnchorSource::Prior, 5, 1, 5, 4, &mut from_seed(8)).unwrap();
        assert_eq!(batch, again);
    }

    #[test]
    fn data_anchors_keep_source_samples() {
        let x = Tensor::randn(&[10, 3], 2.0, &mut from_seed(4));
        let cfg = VaeConfig { latent_dim: 2, hidden: vec![8], epochs: 5, batch_size: 10, ..VaeConfig::default() };
        let g = train_vae(&x, SampleKind::Vector, &cfg, &mut from_seed(5)).unwrap();
        let p = TaskPolicy::new(PolicyKind::RandomOut { alpha: 0.4 }, 0.0, 100).unwrap();
        let t = generate_task_with(&g, &p, AnchorSource::Data(&x), 3, 2, 1, &mut from_seed(6)).unwrap();
        t.validate().unwrap();
        for i in 0..3 {
            let s = t.train.sample(2 * i);
            assert!((0..10).any(|r| x.row(r) == s));
        }
    }
}
