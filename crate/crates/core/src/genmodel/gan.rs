use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Body, Generator};
use crate::data::SampleKind;
use crate::error::{dim_err, Error, Result};
use crate::numkit::tensor::numel;
use crate::numkit::{grad, Architecture, Layer, NetworkParams, Optimizer, OptimizerConfig, Tensor, Var};

const LEAK: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig { latent_dim: 20, hidden: vec![128], epochs: 200, lr: 0.001, batch_size: 64 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanTrace {
    /// Discriminator accuracy on an equal mix of real and generated samples
    /// after training.
    pub final_disc_accuracy: f64,
}

fn leaky_stack(input: Vec<usize>, widths: &[usize], out: usize) -> Result<Architecture> {
    let mut layers = Vec::new();
    let mut width = numel(&input);
    if input.len() > 1 {
        layers.push(Layer::Flatten);
    }
    for &h in widths {
        layers.push(Layer::Dense { inputs: width, outputs: h });
        layers.push(Layer::LeakyRelu { slope: LEAK });
        width = h;
    }
    layers.push(Layer::Dense { inputs: width, outputs: out });
    Architecture::new(input, layers)
}

fn to_vars(ts: &[Tensor], trainable: bool) -> Vec<Var> {
    ts.iter().cloned().map(if trainable { Var::parameter } else { Var::constant }).collect()
}

fn values(vs: &[Var]) -> Vec<Tensor> {
    vs.iter().map(|v| v.value().clone()).collect()
}

/// Trains a GAN with the non-saturating loss on unlabelled samples.
pub fn train_gan<R: Rng + ?Sized>(
    samples: &Tensor,
    kind: SampleKind,
    config: &GanConfig,
    rng: &mut R,
) -> Result<(Generator, GanTrace)> {
    if config.epochs == 0 || config.latent_dim == 0 || config.batch_size == 0 {
        return Err(Error::Config("GAN epochs, latent_dim and batch_size must be positive".into()));
    }
    if samples.shape().len() < 2 {
        return Err(dim_err(format!("samples of shape {:?} lack a batch dimension", samples.shape())));
    }
    let sample_shape = samples.shape()[1..].to_vec();
    let d = numel(&sample_shape);
    let l = config.latent_dim;
    let g_arch = leaky_stack(vec![l], &config.hidden, d)?;
    let d_arch = leaky_stack(vec![d], &config.hidden, 1)?;
    let mut g_params = g_arch.init(rng).tensors;
    let mut d_params = d_arch.init(rng).tensors;
    let opt_cfg = OptimizerConfig { beta1: 0.5, ..OptimizerConfig::adam(config.lr) };
    let mut g_opt = Optimizer::new(opt_cfg, &g_params);
    let mut d_opt = Optimizer::new(opt_cfg, &d_params);

    let squash = |x: Var| match kind {
        SampleKind::Image => x.sigmoid(),
        SampleKind::Vector => x,
    };
    let n = samples.rows();
    let flat = samples.clone().reshape(vec![n, d])?;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.batch_size) {
            let b = chunk.len();
            let real = Var::constant(flat.select_rows(chunk));

            // Discriminator step.
            let z = Var::constant(Tensor::randn(&[b, l], 1.0, rng));
            let fake = squash(g_arch.forward_vars(&to_vars(&g_params, false), &z)?);
            let dv = to_vars(&d_params, true);
            let d_real = d_arch.forward_vars(&dv, &real)?;
            let d_fake = d_arch.forward_vars(&dv, &fake)?;
            let d_loss = d_real.neg().softplus().mean().add(&d_fake.softplus().mean());
            let value = d_loss.item();
            if !value.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss: value });
            }
            d_opt.step(&mut d_params, &values(&grad(&d_loss, &dv, false)?))?;

            // Generator step.
            let z = Var::constant(Tensor::randn(&[b, l], 1.0, rng));
            let gv = to_vars(&g_params, true);
            let fake = squash(g_arch.forward_vars(&gv, &z)?);
            let g_loss = d_arch.forward_vars(&to_vars(&d_params, false), &fake)?.neg().softplus().mean();
            let value = g_loss.item();
            if !value.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss: value });
            }
            g_opt.step(&mut g_params, &values(&grad(&g_loss, &gv, false)?))?;
        }
    }

    let z = Var::constant(Tensor::randn(&[n, l], 1.0, rng));
    let fake = squash(g_arch.forward_vars(&to_vars(&g_params, false), &z)?);
    let dc = to_vars(&d_params, false);
    let real_logits = d_arch.forward_vars(&dc, &Var::constant(flat))?;
    let fake_logits = d_arch.forward_vars(&dc, &fake)?;
    let correct = real_logits.value().data().iter().filter(|&&v| v > 0.0).count()
        + fake_logits.value().data().iter().filter(|&&v| v <= 0.0).count();
    let trace = GanTrace { final_disc_accuracy: correct as f64 / (2 * n) as f64 };

    let decoder = NetworkParams::new(g_arch, g_params)?;
    Ok((Generator::from_body(kind, sample_shape, l, Body::Gan { decoder }), trace))
}
