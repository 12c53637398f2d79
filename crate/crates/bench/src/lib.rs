//! Shared fixtures for the pipeline benchmarks.

use lasium_core::genmodel::{make_analytic_generator, AnalyticGenConfig, Generator, OutputMap};
use lasium_core::lasium::{generate_meta_batch, AnchorSource, MetaBatch, PolicyKind, TaskPolicy};
use lasium_core::rng::from_seed;
use lasium_core::{Architecture, NetworkParams, Result};

pub const N_WAY: usize = 5;
pub const K_TRAIN: usize = 1;
pub const K_VAL: usize = 5;
pub const META_BATCH: usize = 4;

/// A 16-d analytic generator over 32-d samples, a policy and a small MLP.
pub struct Fixture {
    pub generator: Generator,
    pub policy: TaskPolicy,
    pub params: NetworkParams,
    pub batch: MetaBatch,
}

impl Fixture {
    pub fn new(seed: u64) -> Result<Self> {
        let mut rng = from_seed(seed);
        let cfg = AnalyticGenConfig::sphere(20, 16, 8, 5.0, 2.5, 0.5, OutputMap::Random { out_dim: 32 }, &mut rng)?;
        let generator = make_analytic_generator(&cfg, &mut rng)?;
        let policy = TaskPolicy::new(PolicyKind::RandomOut { alpha: 0.4 }, 1.0, 1000)?;
        let params = Architecture::mlp(32, &[64, 64], Some(N_WAY), true).init(&mut rng);
        let batch =
            generate_meta_batch(&generator, &policy, AnchorSource::Prior, N_WAY, K_TRAIN, K_VAL, META_BATCH, &mut rng)?;
        Ok(Fixture { generator, policy, params, batch })
    }
}
