use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{dim_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig { kind: OptimizerKind::Sgd, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig { kind: OptimizerKind::Adam, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam moment estimates. Empty for SGD.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl OptState {
    pub fn new(params: &[Tensor]) -> Self {
        OptState {
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub state: OptState,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: &[Tensor]) -> Self {
        Optimizer { config, state: OptState::new(params) }
    }

    /// Apply one update in place. Parameters are left untouched if the update
    /// would produce a non-finite value.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len()
            || params.len() != self.state.m.len()
            || params.iter().zip(grads).any(|(p, g)| p.shape() != g.shape())
        {
            return Err(dim_err("gradients do not match parameters"));
        }
        let c = self.config;
        let updated: Vec<Vec<f64>> = match c.kind {
            OptimizerKind::Sgd => params
                .iter()
                .zip(grads)
                .map(|(p, g)| p.data().iter().zip(g.data()).map(|(p, g)| p - c.lr * g).collect())
                .collect(),
            OptimizerKind::Adam => {
                let t = (self.state.step + 1) as i32;
                let bc1 = 1.0 - c.beta1.powi(t);
                let bc2 = 1.0 - c.beta2.powi(t);
                let mut out = Vec::with_capacity(params.len());
                let mut new_m = Vec::with_capacity(params.len());
                let mut new_v = Vec::with_capacity(params.len());
                for ((p, g), (m, v)) in params.iter().zip(grads).zip(self.state.m.iter().zip(&self.state.v)) {
                    let mut pm = Vec::with_capacity(p.len());
                    let mut mm = m.clone();
                    let mut vv = v.clone();
                    for i in 0..p.len() {
                        let gi = g.data()[i];
                        let mi = c.beta1 * m.data()[i] + (1.0 - c.beta1) * gi;
                        let vi = c.beta2 * v.data()[i] + (1.0 - c.beta2) * gi * gi;
                        mm.data_mut()[i] = mi;
                        vv.data_mut()[i] = vi;
                        let mhat = mi / bc1;
                        let vhat = vi / bc2;
                        pm.push(p.data()[i] - c.lr * mhat / (vhat.sqrt() + c.eps));
                    }
                    out.push(pm);
                    new_m.push(mm);
                    new_v.push(vv);
                }
                self.state.m = new_m;
                self.state.v = new_v;
                out
            }
        };
        if updated.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerics("optimizer update produced a non-finite parameter".into()));
        }
        for (p, u) in params.iter_mut().zip(updated) {
            p.data_mut().copy_from_slice(&u);
        }
        self.state.step += 1;
        Ok(())
    }
}
