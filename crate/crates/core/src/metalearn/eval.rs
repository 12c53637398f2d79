use serde::{Deserialize, Serialize};

use super::maml::{maml_adapt, MamlConfig};
use super::proto::proto_predict;
use crate::error::{Error, Result};
use crate::lasium::MetaTask;
use crate::numkit::{forward, NetworkParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Maml,
    Proto,
}

impl LearnerKind {
    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Maml => "maml",
            LearnerKind::Proto => "proto",
        }
    }
}

impl std::str::FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maml" => Ok(LearnerKind::Maml),
            "proto" | "protonets" => Ok(LearnerKind::Proto),
            other => Err(Error::Config(format!("unknown learner {other:?}"))),
        }
    }
}

/// Row-wise argmax, lowest index on ties.
pub(crate) fn argmax_rows(t: &crate::numkit::Tensor) -> Vec<usize> {
    let m = t.row_len();
    (0..t.rows())
        .map(|i| {
            let row = t.row(i);
            (0..m).fold(0, |best, j| if row[j] > row[best] { j } else { best })
        })
        .collect()
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    let correct = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    correct as f64 / labels.len() as f64
}

/// Val-split accuracy of `params` on one task. MAML adapts a private copy
/// for `eval_adaptation_steps`; ProtoNets scores against train prototypes.
pub fn evaluate_episode(kind: LearnerKind, params: &NetworkParams, task: &MetaTask, maml: &MamlConfig) -> Result<f64> {
    task.validate()?;
    if task.val.is_empty() {
        return Err(Error::Config("evaluation needs a non-empty val split".into()));
    }
    let predicted = match kind {
        LearnerKind::Maml => {
            let adapted = maml_adapt(params, &task.train, maml.inner_lr, maml.eval_adaptation_steps)?;
            argmax_rows(&forward(&adapted.params, &task.val.batch()?)?)
        }
        LearnerKind::Proto => proto_predict(params, task)?,
    };
    Ok(accuracy(&predicted, &task.val.labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genmodel::LatentVector;
    use crate::genmodel::{make_analytic_generator, AnalyticGenConfig, Generator, OutputMap};
    use crate::lasium::{generate_task, PolicyKind, Provenance, TaskPolicy};
    use crate::numkit::Architecture;
    use crate::rng::from_seed;

    fn generator() -> Generator {
        let cfg =
            AnalyticGenConfig::sphere(8, 8, 8, 10.0, 10.0, 1.0, OutputMap::Random { out_dim: 12 }, &mut from_seed(3))
                .unwrap();
        make_analytic_generator(&cfg, &mut from_seed(4)).unwrap()
    }

    fn policy() -> TaskPolicy {
        TaskPolicy::new(PolicyKind::Noise { sigma: 0.5 }, 5.0, 1000).unwrap()
    }

    #[test]
    fn untrained_net_is_near_chance() {
        let g = generator();
        let params = Architecture::mlp(12, &[16], Some(5), true).init(&mut from_seed(5));
        let cfg = MamlConfig { eval_adaptation_steps: 0, ..MamlConfig::default() };
        let mut rng = from_seed(6);
        let mean = (0..100)
            .map(|_| {
                let t = generate_task(&g, &policy(), 5, 1, 5, &mut rng).unwrap();
                evaluate_episode(LearnerKind::Maml, &params, &t, &cfg).unwrap()
            })
            .sum::<f64>()
            / 100.0;
        assert!((0.05..=0.45).contains(&mean), "{mean}");
    }

    #[test]
    fn overfits_val_copied_from_train() {
        let g = generator();
        let params = Architecture::mlp(12, &[16], Some(5), true).init(&mut from_seed(7));
        let mut t = generate_task(&g, &policy(), 5, 2, 0, &mut from_seed(8)).unwrap();
        t.val = t.train.clone();
        t.k_val = t.k_train;
        let Provenance::Latent { train, val, .. } = &mut t.provenance else { unreachable!() };
        // Val latents must stay distinct from train latents.
        *val =
            train.iter().map(|z| LatentVector::new(z.values().iter().map(|v| v + 1e-9).collect()).unwrap()).collect();
        let before = params.clone();
        let acc = evaluate_episode(LearnerKind::Maml, &params, &t, &MamlConfig::default()).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(params, before);
    }

    #[test]
    fn single_val_sample() {
        assert_eq!(accuracy(&[2], &[2]), 1.0);
        assert_eq!(accuracy(&[2], &[1]), 0.0);
        assert_eq!(argmax_rows(&crate::numkit::Tensor::matrix(1, 3, vec![0.5, 0.5, 0.1]).unwrap()), vec![0]);
    }

    #[test]
    fn proto_episode_on_separated_clusters() {
        let g = generator();
        let params = Architecture::mlp(12, &[16], None, false).init(&mut from_seed(9));
        let t = generate_task(&g, &policy(), 5, 1, 5, &mut from_seed(10)).unwrap();
        let acc = evaluate_episode(LearnerKind::Proto, &params, &t, &MamlConfig::default()).unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}
