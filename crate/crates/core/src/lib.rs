//! Unsupervised meta-learning by latent-space interpolation.
//!
//! A generative model trained on unlabeled data is sampled to build
//! synthetic N-way few-shot tasks: well-separated latent anchors seed the
//! classes, and in-class samples come from noise around an anchor or from
//! interpolating it toward another latent point. The tasks feed MAML or
//! prototypical-network meta-learners, which are then evaluated on real
//! labelled episodes.
//!
//! Modules:
//! - [`numkit`]: tensors, autodiff with higher-order gradients, networks, optimizers.
//! - [`genmodel`]: generator abstraction, VAE, optional GAN, analytic oracle generator, checkpoints.
//! - [`lasium`]: anchor sampling, in-class policies, task and meta-batch assembly, task dumps.
//! - [`metalearn`]: MAML, prototypical networks, episode evaluation.
//! - [`data`]: labelled datasets, the LDAT file format, synthetic benchmarks, class splits, episodes.
//! - [`harness`]: run configuration, commands, reports.

mod codec;
pub mod data;
pub mod error;
pub mod genmodel;
pub mod harness;
pub mod lasium;
pub mod metalearn;
pub mod numkit;
pub mod rng;

pub use error::{Error, ErrorClass, Result};
pub use numkit::{Architecture, NetworkParams, Tensor};
