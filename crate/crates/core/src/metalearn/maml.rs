use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasium::{MetaBatch, MetaTask, TaskSplit};
use crate::numkit::loss::check_finite;
use crate::numkit::{cross_entropy, grad, GradientSet, NetworkParams, Optimizer, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MamlOrder {
    First,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MamlConfig {
    pub inner_lr: f64,
    pub meta_lr: f64,
    pub adaptation_steps: usize,
    pub eval_adaptation_steps: usize,
    pub meta_batch_size: usize,
    pub order: MamlOrder,
}

impl Default for MamlConfig {
    fn default() -> Self {
        MamlConfig {
            inner_lr: 0.4,
            meta_lr: 0.001,
            adaptation_steps: 5,
            eval_adaptation_steps: 50,
            meta_batch_size: 4,
            order: MamlOrder::Second,
        }
    }
}

impl MamlConfig {
    /// Inner learning rate used for inputs larger than 28×28.
    pub const LARGE_INPUT_INNER_LR: f64 = 0.05;

    pub fn validate(&self) -> Result<()> {
        if !(self.inner_lr.is_finite() && self.inner_lr >= 0.0) || !(self.meta_lr.is_finite() && self.meta_lr > 0.0) {
            return Err(Error::Config("MAML learning rates must be finite and positive".into()));
        }
        if self.meta_batch_size == 0 {
            return Err(Error::Config("meta_batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Parameters after inner-loop adaptation, with where they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedParams {
    pub params: NetworkParams,
    pub source_hash: u64,
    pub steps: usize,
}

pub(crate) fn params_hash(params: &NetworkParams) -> u64 {
    let mut h = DefaultHasher::new();
    for v in params.flatten() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Runs `steps` plain gradient steps `θ ← θ − lr · ∇L(θ)` on a differentiable
/// objective. With `create_graph` the result stays differentiable with
/// respect to the starting point, through every step.
pub fn inner_loop(
    theta: &[Var],
    loss: impl Fn(&[Var]) -> Result<Var>,
    lr: f64,
    steps: usize,
    create_graph: bool,
) -> Result<Vec<Var>> {
    let mut fast = theta.to_vec();
    for _ in 0..steps {
        let l = loss(&fast)?;
        check_finite(l.item(), "inner-loop loss")?;
        let g = grad(&l, &fast, create_graph)?;
        fast = fast.iter().zip(&g).map(|(p, g)| p.sub(&g.scale(lr))).collect();
    }
    Ok(fast)
}

pub(crate) fn split_loss(params: &NetworkParams, weights: &[Var], split: &TaskSplit) -> Result<Var> {
    let batch = Var::constant(split.batch()?);
    let logits = params.arch.forward_vars(weights, &batch)?;
    cross_entropy(&logits, &split.labels)
}

/// Full-batch gradient descent on the task's train split.
pub fn maml_adapt(params: &NetworkParams, train: &TaskSplit, inner_lr: f64, steps: usize) -> Result<AdaptedParams> {
    let theta = params.as_parameters();
    let fast = inner_loop(&theta, |w| split_loss(params, w, train), inner_lr, steps, false)?;
    let tensors: Vec<Tensor> = fast.iter().map(|v| v.value().clone()).collect();
    if tensors.iter().any(|t| !t.is_finite()) {
        return Err(Error::Numerics("adaptation produced non-finite parameters".into()));
    }
    Ok(AdaptedParams { params: params.with_tensors(tensors)?, source_hash: params_hash(params), steps })
}

/// Post-adaptation val loss of one task and its gradient with respect to the
/// pre-adaptation parameters.
pub fn maml_task_gradient(params: &NetworkParams, task: &MetaTask, config: &MamlConfig) -> Result<(f64, Vec<Tensor>)> {
    if task.val.is_empty() {
        return Err(Error::Config("meta-training needs a non-empty val split".into()));
    }
    let theta = params.as_parameters();
    let second = config.order == MamlOrder::Second;
    let fast =
        inner_loop(&theta, |w| split_loss(params, w, &task.train), config.inner_lr, config.adaptation_steps, second)?;
    let val = split_loss(params, &fast, &task.val)?;
    let value = check_finite(val.item(), "meta loss")?;
    let g = grad(&val, &theta, false)?;
    Ok((value, g.iter().map(|v| v.value().clone()).collect()))
}

/// Mean val loss over the batch and the mean meta-gradient. Tasks are
/// processed in parallel and reduced in task order.
pub fn maml_meta_gradient(
    params: &NetworkParams,
    batch: &MetaBatch,
    config: &MamlConfig,
) -> Result<(f64, GradientSet)> {
    let per_task = batch.tasks.par_iter().map(|t| maml_task_gradient(params, t, config)).collect::<Result<Vec<_>>>()?;
    Ok(reduce(per_task))
}

pub(crate) fn reduce(per_task: Vec<(f64, Vec<Tensor>)>) -> (f64, GradientSet) {
    let n = per_task.len() as f64;
    let mut iter = per_task.into_iter();
    let (mut loss, mut acc) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        for (a, b) in acc.iter_mut().zip(&g) {
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
        }
    }
    for a in &mut acc {
        a.data_mut().iter_mut().for_each(|x| *x /= n);
    }
    (loss / n, GradientSet { tensors: acc })
}

/// One meta-update. `opt` carries the optimizer moments between calls.
pub fn maml_meta_step(
    params: &NetworkParams,
    batch: &MetaBatch,
    config: &MamlConfig,
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
    let (loss, g) = maml_meta_gradient(params, batch, config)?;
    let mut tensors = params.tensors.clone();
    opt.step(&mut tensors, &g.tensors)?;
    Ok((params.with_tensors(tensors)?, loss))
}
