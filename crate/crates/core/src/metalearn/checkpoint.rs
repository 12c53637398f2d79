//! Learner checkpoints in the LGEN container: a classifier container holding
//! the network, and an optimizer-state sidecar holding step count and moments.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::LearnerKind;
use crate::error::{Error, Result};
use crate::genmodel::{read_container, write_container, Container, ContainerKind};
use crate::numkit::{Architecture, NetworkParams, OptState, Optimizer, OptimizerConfig, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerCheckpoint {
    pub kind: LearnerKind,
    pub params: NetworkParams,
}

#[derive(Serialize, Deserialize)]
struct ClassifierDescription {
    learner: LearnerKind,
    arch: Architecture,
}

#[derive(Serialize, Deserialize)]
struct OptimizerDescription {
    config: OptimizerConfig,
    step: u64,
    shapes: Vec<Vec<usize>>,
}

fn expect_kind(c: &Container, kind: ContainerKind) -> Result<()> {
    if c.kind != kind {
        return Err(Error::BadShape(format!("expected a {kind:?} container, found {:?}", c.kind)));
    }
    Ok(())
}

impl LearnerCheckpoint {
    pub fn to_container(&self) -> Container {
        let desc = ClassifierDescription { learner: self.kind, arch: self.params.arch.clone() };
        Container {
            kind: ContainerKind::Classifier,
            latent_dim: 0,
            description: serde_json::to_string(&desc).expect("description serialises"),
            payload: self.params.flatten(),
        }
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        expect_kind(c, ContainerKind::Classifier)?;
        let desc: ClassifierDescription = serde_json::from_str(&c.description)?;
        let params = NetworkParams::from_flat(desc.arch, &c.payload).map_err(|e| Error::BadShape(e.to_string()))?;
        Ok(LearnerCheckpoint { kind: desc.learner, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, write_container(&self.to_container()))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&read_container(&fs::read(path)?)?)
    }
}

/// Payload: every first moment in slot order, then every second moment.
pub fn optimizer_to_container(opt: &Optimizer) -> Container {
    let desc = OptimizerDescription {
        config: opt.config,
        step: opt.state.step,
        shapes: opt.state.m.iter().map(|t| t.shape().to_vec()).collect(),
    };
    let payload = opt.state.m.iter().chain(&opt.state.v).flat_map(|t| t.data().iter().copied()).collect();
    Container {
        kind: ContainerKind::OptimizerState,
        latent_dim: 0,
        description: serde_json::to_string(&desc).expect("description serialises"),
        payload,
    }
}

pub fn optimizer_from_container(c: &Container) -> Result<Optimizer> {
    expect_kind(c, ContainerKind::OptimizerState)?;
    let desc: OptimizerDescription = serde_json::from_str(&c.description)?;
    let total: usize = desc.shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if c.payload.len() != 2 * total {
        return Err(Error::BadShape(format!(
            "optimizer state holds {} values, expected {}",
            c.payload.len(),
            2 * total
        )));
    }
    let mut offset = 0;
    let mut next = |shape: &Vec<usize>| {
        let n = shape.iter().product::<usize>();
        let t = Tensor::new(shape.clone(), c.payload[offset..offset + n].to_vec());
        offset += n;
        t
    };
    let m = desc.shapes.iter().map(&mut next).collect::<Result<Vec<_>>>()?;
    let v = desc.shapes.iter().map(&mut next).collect::<Result<Vec<_>>>()?;
    Ok(Optimizer { config: desc.config, state: OptState { step: desc.step, m, v } })
}

pub fn save_optimizer(opt: &Optimizer, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_container(&optimizer_to_container(opt)))?;
    Ok(())
}

pub fn load_optimizer(path: impl AsRef<Path>) -> Result<Optimizer> {
    optimizer_from_container(&read_container(&fs::read(path)?)?)
}
