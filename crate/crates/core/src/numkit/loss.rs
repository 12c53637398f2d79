use super::autodiff::{grad, Var};
use super::net::NetworkParams;
use super::tensor::Tensor;
use crate::error::{dim_err, Error, Result};

/// Supported training objectives.
#[derive(Clone, Debug)]
pub enum Loss {
    /// Mean softmax cross-entropy against class indices.
    CrossEntropy(Vec<usize>),
    /// Mean of squared errors over every output entry.
    MeanSquaredError(Tensor),
}

impl Loss {
    pub fn apply(&self, outputs: &Var) -> Result<Var> {
        match self {
            Loss::CrossEntropy(labels) => cross_entropy(outputs, labels),
            Loss::MeanSquaredError(target) => mean_squared_error(outputs, target),
        }
    }
}

pub fn cross_entropy(logits: &Var, labels: &[usize]) -> Result<Var> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(dim_err(format!("logits {s:?} vs {} labels", labels.len())));
    }
    let (n, c) = (s[0], s[1]);
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(dim_err(format!("label {bad} out of range for {c} classes")));
    }
    let picked = super::autodiff::IndexMap::new(
        labels.iter().enumerate().map(|(i, &l)| i * c + l).collect(),
        vec![n, c],
        vec![n],
    );
    Ok(logits.log_softmax().gather(&picked).mean().neg())
}

pub fn mean_squared_error(outputs: &Var, target: &Tensor) -> Result<Var> {
    if outputs.shape() != target.shape() {
        return Err(dim_err(format!("outputs {:?} vs target {:?}", outputs.shape(), target.shape())));
    }
    Ok(outputs.sub(&Var::constant(target.clone())).square().mean())
}

/// One gradient tensor per parameter tensor, shape-matched.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub tensors: Vec<Tensor>,
}

impl GradientSet {
    pub fn from_vars(vars: &[Var]) -> Self {
        GradientSet { tensors: vars.iter().map(|v| v.value().clone()).collect() }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }
}

pub(crate) fn check_finite(loss: f64, what: &str) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Numerics(format!("{what} is not finite ({loss})")))
    }
}

/// Loss value and its gradient with respect to every network parameter.
pub fn value_and_grad(net: &NetworkParams, loss: &Loss, batch: &Tensor) -> Result<(f64, GradientSet)> {
    let params = net.as_parameters();
    let out = net.arch.forward_vars(&params, &Var::constant(batch.clone()))?;
    let l = loss.apply(&out)?;
    let value = check_finite(l.item(), "loss")?;
    let grads = grad(&l, &params, false)?;
    Ok((value, GradientSet::from_vars(&grads)))
}
