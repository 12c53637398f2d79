use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::maml::reduce;
use crate::error::{dim_err, Error, Result};
use crate::lasium::{MetaBatch, MetaTask, TaskSplit};
use crate::numkit::loss::check_finite;
use crate::numkit::{cross_entropy, grad, GradientSet, IndexMap, NetworkParams, Optimizer, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtoConfig {
    pub meta_lr: f64,
    pub meta_batch_size: usize,
}

impl Default for ProtoConfig {
    fn default() -> Self {
        ProtoConfig { meta_lr: 0.001, meta_batch_size: 4 }
    }
}

impl ProtoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.meta_lr.is_finite() && self.meta_lr > 0.0) || self.meta_batch_size == 0 {
            return Err(Error::Config("ProtoNets meta_lr and meta_batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Per-class mean of `[n, e]` embeddings, as an `[n_way, e]` tensor.
pub fn proto_prototypes(embeddings: &Var, labels: &[usize], n_way: usize) -> Result<Var> {
    let s = embeddings.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(dim_err(format!("embeddings {s:?} vs {} labels", labels.len())));
    }
    let e = s[1];
    let mut counts = vec![0usize; n_way];
    for &l in labels {
        if l >= n_way {
            return Err(Error::Config(format!("label {l} outside {n_way} classes")));
        }
        counts[l] += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Config(format!("no embedding for class {missing}")));
    }
    let src = (0..labels.len() * e).map(|k| labels[k / e] * e + k % e).collect();
    let sums = embeddings.scatter_add(&IndexMap::new(src, vec![n_way, e], vec![labels.len(), e]));
    let inv = (0..n_way * e).map(|k| 1.0 / counts[k / e] as f64).collect();
    Ok(sums.mul(&Var::constant(Tensor::from_parts(vec![n_way, e], inv))))
}

/// `[q, n_way]` squared Euclidean distances between queries and prototypes.
pub fn squared_distances(queries: &Var, prototypes: &Var) -> Result<Var> {
    let (qs, ps) = (queries.shape(), prototypes.shape());
    if qs.len() != 2 || ps.len() != 2 || qs[1] != ps[1] {
        return Err(dim_err(format!("queries {qs:?} vs prototypes {ps:?}")));
    }
    let (q, n, e) = (qs[0], ps[0], qs[1]);
    let pairs = q * n * e;
    let qi = IndexMap::new((0..pairs).map(|k| (k / (n * e)) * e + k % e).collect(), vec![q, e], vec![q * n, e]);
    let pi = IndexMap::new((0..pairs).map(|k| k % (n * e)).collect(), vec![n, e], vec![q * n, e]);
    let diff = queries.gather(&qi).sub(&prototypes.gather(&pi));
    Ok(diff.square().sum_cols().reshape(&[q, n]))
}

/// Log-probabilities: log-softmax of negative squared distances.
pub fn proto_log_probs(queries: &Var, prototypes: &Var) -> Result<Var> {
    Ok(squared_distances(queries, prototypes)?.neg().log_softmax())
}

/// Per-class probabilities for each query row.
pub fn proto_classify(queries: &Tensor, prototypes: &Tensor) -> Result<Tensor> {
    let lp = proto_log_probs(&Var::constant(queries.clone()), &Var::constant(prototypes.clone()))?;
    Ok(lp.value().map(f64::exp))
}

fn embed(params: &NetworkParams, weights: &[Var], split: &TaskSplit) -> Result<Var> {
    let out = params.arch.forward_vars(weights, &Var::constant(split.batch()?))?;
    if out.shape().len() != 2 {
        return Err(dim_err(format!("embedding network yields {:?}, expected flat features", out.shape())));
    }
    Ok(out)
}

/// Cross-entropy of val queries against prototypes built from the train split.
pub fn proto_episode_loss(params: &NetworkParams, weights: &[Var], task: &MetaTask) -> Result<Var> {
    if task.val.is_empty() {
        return Err(Error::Config("ProtoNets episodes need a non-empty val split".into()));
    }
    let protos = proto_prototypes(&embed(params, weights, &task.train)?, &task.train.labels, task.n_way)?;
    let logits = squared_distances(&embed(params, weights, &task.val)?, &protos)?.neg();
    cross_entropy(&logits, &task.val.labels)
}

pub fn proto_task_gradient(params: &NetworkParams, task: &MetaTask) -> Result<(f64, Vec<Tensor>)> {
    let w = params.as_parameters();
    let loss = proto_episode_loss(params, &w, task)?;
    let value = check_finite(loss.item(), "episode loss")?;
    Ok((value, grad(&loss, &w, false)?.iter().map(|g| g.value().clone()).collect()))
}

pub fn proto_meta_gradient(params: &NetworkParams, batch: &MetaBatch) -> Result<(f64, GradientSet)> {
    let per_task = batch.tasks.par_iter().map(|t| proto_task_gradient(params, t)).collect::<Result<Vec<_>>>()?;
    Ok(reduce(per_task))
}

pub fn proto_meta_step(
    params: &NetworkParams,
    batch: &MetaBatch,
    config: &ProtoConfig,
    opt: &mut Optimizer,
) -> Result<(NetworkParams, f64)> {
    config.validate()?;
    if batch.len() != config.meta_batch_size {
        return Err(Error::Config(format!(
            "meta-batch of {} tasks, config says {}",
            batch.len(),
            config.meta_batch_size
        )));
    }
    let (loss, g) = proto_meta_gradient(params, batch)?;
    let mut tensors = params.tensors.clone();
    opt.step(&mut tensors, &g.tensors)?;
    Ok((params.with_tensors(tensors)?, loss))
}

/// Predicted class of each val sample: nearest prototype, lowest id on ties.
pub fn proto_predict(params: &NetworkParams, task: &MetaTask) -> Result<Vec<usize>> {
    let w = params.as_constants();
    let protos = proto_prototypes(&embed(params, &w, &task.train)?, &task.train.labels, task.n_way)?;
    let d = squared_distances(&embed(params, &w, &task.val)?, &protos)?;
    Ok(argmin_rows(d.value()))
}

fn argmin_rows(t: &Tensor) -> Vec<usize> {
    let m = t.row_len();
    (0..t.rows())
        .map(|i| {
            let row = t.row(i);
            (0..m).fold(0, |best, j| if row[j] < row[best] { j } else { best })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn prototypes_are_class_means() {
        let e = Var::constant(m(3, 2, &[0.0, 0.0, 5.0, 5.0, 2.0, 2.0]));
        let p = proto_prototypes(&e, &[0, 1, 0], 2).unwrap();
        assert_eq!(p.value().data(), &[1.0, 1.0, 5.0, 5.0]);
        let one = Var::constant(m(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(proto_prototypes(&one, &[0, 1], 2).unwrap().value().data(), one.value().data());
    }

    #[test]
    fn permutation_leaves_prototypes_unchanged() {
        let a = Var::constant(m(4, 1, &[1.0, 2.0, 3.0, 4.0]));
        let b = Var::constant(m(4, 1, &[4.0, 3.0, 1.0, 2.0]));
        let pa = proto_prototypes(&a, &[0, 0, 1, 1], 2).unwrap();
        let pb = proto_prototypes(&b, &[1, 1, 0, 0], 2).unwrap();
        assert_eq!(pa.value(), pb.value());
    }

    #[test]
    fn missing_label_is_config_error() {
        let e = Var::constant(m(2, 1, &[1.0, 2.0]));
        assert!(matches!(proto_prototypes(&e, &[0, 0], 2), Err(Error::Config(_))));
    }

    #[test]
    fn hand_computed_softmax() {
        // Squared distances 1 and 4.
        let p = proto_classify(&m(1, 1, &[0.0]), &m(2, 1, &[1.0, 2.0])).unwrap();
        let (a, b) = ((-1.0f64).exp(), (-4.0f64).exp());
        assert!((p.data()[0] - a / (a + b)).abs() < 1e-15);
        assert!((p.data()[0] - 0.9526).abs() < 5e-5 && (p.data()[1] - 0.0474).abs() < 5e-5);
    }

    #[test]
    fn equidistant_query_is_uniform() {
        let p = proto_classify(&m(1, 2, &[0.0, 0.0]), &m(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0])).unwrap();
        assert!(p.data().iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn query_on_prototype_wins() {
        let protos = m(3, 2, &[0.0, 0.0, 3.0, 1.0, -2.0, 4.0]);
        let p = proto_classify(&m(1, 2, &[3.0, 1.0]), &protos).unwrap();
        assert_eq!(argmin_rows(&p.map(|v| -v)), vec![1]);
        assert!(proto_classify(&m(1, 3, &[0.0; 3]), &protos).is_err());
    }

    use crate::genmodel::{make_analytic_generator, AnalyticGenConfig, OutputMap};
    use crate::lasium::{generate_meta_batch, AnchorSource, PolicyKind, TaskPolicy};
    use crate::numkit::{Architecture, OptimizerConfig};
    use crate::rng::from_seed;

    fn batch(seed: u64, n_mb: usize) -> MetaBatch {
        let cfg =
            AnalyticGenConfig::sphere(8, 8, 8, 10.0, 10.0, 1.0, OutputMap::Random { out_dim: 12 }, &mut from_seed(1))
                .unwrap();
        let g = make_analytic_generator(&cfg, &mut from_seed(2)).unwrap();
        let p = TaskPolicy::new(PolicyKind::RandomOut { alpha: 0.4 }, 5.0, 1000).unwrap();
        generate_meta_batch(&g, &p, AnchorSource::Prior, 5, 1, 5, n_mb, &mut from_seed(seed)).unwrap()
    }

    #[test]
    fn uniform_predictions_give_ln_n() {
        let b = batch(3, 1);
        let arch = Architecture::mlp(12, &[6], None, false);
        let zero = arch
            .init(&mut from_seed(0))
            .with_tensors(arch.param_shapes().iter().map(|s| Tensor::zeros(s)).collect())
            .unwrap();
        let (l, _) = proto_task_gradient(&zero, &b.tasks[0]).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn meta_loss_decreases_over_training() {
        let cfg = ProtoConfig::default();
        let held = batch(100, 8);
        let mut params = Architecture::mlp(12, &[16], None, true).init(&mut from_seed(11));
        let mut opt = Optimizer::new(OptimizerConfig::adam(cfg.meta_lr), &params.tensors);
        let initial = proto_meta_gradient(&params, &held).unwrap().0;
        let mut rng = from_seed(12);
        for _ in 0..100 {
            let seed: u64 = rand::Rng::random(&mut rng);
            params = proto_meta_step(&params, &batch(seed, 4), &cfg, &mut opt).unwrap().0;
        }
        let fin = proto_meta_gradient(&params, &held).unwrap().0;
        assert!(fin < initial, "{initial} -> {fin}");
    }

    #[test]
    fn distance_shift_leaves_probabilities_unchanged() {
        let d = Var::constant(m(2, 3, &[1.0, 4.0, 2.5, 0.3, 0.1, 7.0]));
        let a = d.neg().log_softmax();
        let b = d.shift(3.7).neg().log_softmax();
        assert!(a.value().max_abs_diff(b.value()) < 1e-12);
    }
}
