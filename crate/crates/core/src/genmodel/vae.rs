use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Body, Generator};
use crate::data::SampleKind;
use crate::error::{dim_err, Error, Result};
use crate::numkit::tensor::numel;
use crate::numkit::{grad, Architecture, Layer, NetworkParams, Optimizer, OptimizerConfig, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub latent_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub kl_weight: f64,
    pub batch_size: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig { latent_dim: 20, hidden: vec![128], epochs: 1000, lr: 0.001, kl_weight: 1.0, batch_size: 64 }
    }
}

impl VaeConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("VAE epochs must be at least 1".into()));
        }
        if self.latent_dim == 0 || self.batch_size == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("VAE sizes must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) || !(self.kl_weight.is_finite() && self.kl_weight >= 0.0) {
            return Err(Error::Config("VAE learning rate and KL weight must be finite and positive".into()));
        }
        Ok(())
    }
}

/// Loss history of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeTrace {
    /// Full-dataset negative ELBO per sample before the first update.
    pub initial_loss: f64,
    /// The same quantity, with the same noise, after the last update.
    pub final_loss: f64,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

fn dense_stack(input: Vec<usize>, widths: &[usize], out: usize) -> Result<Architecture> {
    let mut layers = Vec::new();
    let mut width = numel(&input);
    if input.len() > 1 {
        layers.push(Layer::Flatten);
    }
    for &h in widths {
        layers.push(Layer::Dense { inputs: width, outputs: h });
        layers.push(Layer::Relu);
        width = h;
    }
    layers.push(Layer::Dense { inputs: width, outputs: out });
    Architecture::new(input, layers)
}

/// Per-sample negative ELBO averaged over the batch.
#[allow(clippy::too_many_arguments)]
fn neg_elbo(
    enc: &[Var],
    dec: &[Var],
    encoder: &Architecture,
    decoder: &Architecture,
    x: &Tensor,
    noise: &Tensor,
    kind: SampleKind,
    kl_weight: f64,
) -> Result<Var> {
    let n = x.rows();
    let l = noise.row_len();
    let stats = encoder.forward_vars(enc, &Var::constant(x.clone()))?;
    let mu = stats.slice_cols(0, l);
    let logvar = stats.slice_cols(l, l);
    let z = mu.add(&logvar.scale(0.5).exp().mul(&Var::constant(noise.clone())));
    let out = decoder.forward_vars(dec, &z)?;
    let target = Var::constant(x.clone().reshape(vec![n, x.row_len()])?);
    let recon = match kind {
        SampleKind::Image => out.softplus().sub(&target.mul(&out)).sum(),
        SampleKind::Vector => out.sub(&target).square().sum().scale(0.5),
    };
    let kl = mu.square().add(&logvar.exp()).sub(&logvar).shift(-1.0).sum().scale(0.5);
    Ok(recon.add(&kl.scale(kl_weight)).scale(1.0 / n as f64))
}

/// Trains a VAE on unlabelled samples `[n, ...sample_shape]`.
pub fn train_vae<R: Rng + ?Sized>(
    samples: &Tensor,
    kind: SampleKind,
    config: &VaeConfig,
    rng: &mut R,
) -> Result<Generator> {
    train_vae_traced(samples, kind, config, rng).map(|(g, _)| g)
}

/// As [`train_vae`], also returning the loss history.
pub fn train_vae_traced<R: Rng + ?Sized>(
    samples: &Tensor,
    kind: SampleKind,
    config: &VaeConfig,
    rng: &mut R,
) -> Result<(Generator, VaeTrace)> {
    config.validate()?;
    if samples.shape().len() < 2 {
        return Err(dim_err(format!("samples of shape {:?} lack a batch dimension", samples.shape())));
    }
    let sample_shape = samples.shape()[1..].to_vec();
    let d = numel(&sample_shape);
    let l = config.latent_dim;
    let mut rev = config.hidden.clone();
    rev.reverse();
    let encoder_arch = dense_stack(sample_shape.clone(), &config.hidden, 2 * l)?;
    let decoder_arch = dense_stack(vec![l], &rev, d)?;
    let encoder = encoder_arch.init(rng);
    let decoder = decoder_arch.init(rng);
    let n_enc = encoder.tensors.len();

    let mut params: Vec<Tensor> = encoder.tensors.into_iter().chain(decoder.tensors).collect();
    let mut opt = Optimizer::new(OptimizerConfig::adam(config.lr), &params);

    let n = samples.rows();
    let eval_noise = Tensor::randn(&[n, l], 1.0, rng);
    let full_loss = |params: &[Tensor]| -> Result<f64> {
        let vars: Vec<Var> = params.iter().cloned().map(Var::constant).collect();
        let loss = neg_elbo(
            &vars[..n_enc],
            &vars[n_enc..],
            &encoder_arch,
            &decoder_arch,
            samples,
            &eval_noise,
            kind,
            config.kl_weight,
        )?;
        Ok(loss.item())
    };
    let initial_loss = full_loss(&params)?;
    if !initial_loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch: 0, loss: initial_loss });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = samples.select_rows(chunk);
            let noise = Tensor::randn(&[chunk.len(), l], 1.0, rng);
            let vars: Vec<Var> = params.iter().cloned().map(Var::parameter).collect();
            let loss = neg_elbo(
                &vars[..n_enc],
                &vars[n_enc..],
                &encoder_arch,
                &decoder_arch,
                &x,
                &noise,
                kind,
                config.kl_weight,
            )?;
            let value = loss.item();
            if !value.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss: value });
            }
            let grads: Vec<Tensor> = grad(&loss, &vars, false)?.iter().map(|g| g.value().clone()).collect();
            opt.step(&mut params, &grads).map_err(|_| Error::TrainingDiverged { epoch, loss: value })?;
            total += value * chunk.len() as f64;
        }
        epoch_losses.push(total / n as f64);
    }
    let final_loss = full_loss(&params)?;
    if !final_loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch: config.epochs, loss: final_loss });
    }

    let dec_tensors = params.split_off(n_enc);
    let body = Body::Vae {
        encoder: NetworkParams::new(encoder_arch, params)?,
        decoder: NetworkParams::new(decoder_arch, dec_tensors)?,
    };
    let gen = Generator::from_body(kind, sample_shape, l, body);
    Ok((gen, VaeTrace { initial_loss, final_loss, epoch_losses }))
}
