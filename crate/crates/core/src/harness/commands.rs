use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{AnchorSourceName, ArchName, GenKindName, GenTrainSet, RunConfig};
use super::report::{metrics_csv, EpisodeReport, MetricsRow};
use crate::data::{make_synthetic_with, sample_supervised_task, split_classes, LabeledDataset, MetaSplit, SampleKind};
use crate::error::{Error, Result};
use crate::genmodel::{calibrate_eps_dist, train_vae, Generator, CALIBRATION_PAIRS};
use crate::lasium::{
    dump_task, generate_meta_batch, generate_task_with, AnchorSource, MetaBatch, MetaTask, Provenance, TaskPolicy,
};
use crate::metalearn::{
    evaluate_episode, maml_adapt, maml_meta_step, proto_meta_step, save_optimizer, LearnerCheckpoint, LearnerKind,
};
use crate::numkit::tensor::numel;
use crate::numkit::{forward, Architecture, Layer, NetworkParams, Optimizer, OptimizerConfig};
use crate::rng::{derive_seed, domain, from_seed, stream};

pub const GENERATOR_FILE: &str = "generator.lgen";
pub const SYNTH_DATASET_FILE: &str = "dataset.ldat";
pub const SYNTH_GENERATOR_FILE: &str = "analytic.lgen";
pub const LEARNER_FILE: &str = "learner.lgen";
pub const OPTIMIZER_FILE: &str = "learner.opt.lgen";
pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_STEM: &str = "report";
pub const SCRATCH_REPORT_STEM: &str = "scratch_report";
pub const SUPERVISED_LEARNER_FILE: &str = "supervised_learner.lgen";
pub const SUPERVISED_OPTIMIZER_FILE: &str = "supervised_learner.opt.lgen";
pub const SUPERVISED_METRICS_FILE: &str = "supervised_metrics.csv";
pub const SUPERVISED_REPORT_STEM: &str = "supervised_report";

/// Wall-clock milliseconds, or 0 in deterministic mode so outputs stay
/// byte-identical across runs.
struct Clock {
    start: Instant,
    enabled: bool,
}

impl Clock {
    fn new(cfg: &RunConfig) -> Self {
        Clock { start: Instant::now(), enabled: !cfg.deterministic }
    }

    fn ms(&self) -> u64 {
        if self.enabled {
            self.start.elapsed().as_millis() as u64
        } else {
            0
        }
    }
}

/// Class ids a command touched, checked against the ids it may touch.
#[derive(Clone, Debug, Serialize)]
pub struct ClassAudit {
    pub phase: String,
    pub allowed: Vec<usize>,
    pub touched: BTreeSet<usize>,
}

impl ClassAudit {
    fn new(phase: &str, allowed: &[usize]) -> Self {
        let mut allowed = allowed.to_vec();
        allowed.sort_unstable();
        ClassAudit { phase: phase.into(), allowed, touched: BTreeSet::new() }
    }

    fn record(&mut self, task: &MetaTask) -> Result<()> {
        if let Provenance::Dataset { classes, .. } = &task.provenance {
            for &c in classes {
                if self.allowed.binary_search(&c).is_err() {
                    return Err(Error::Config(format!("{}: class {c} lies outside the permitted split", self.phase)));
                }
                self.touched.insert(c);
            }
        }
        Ok(())
    }

    fn write(&self, out: &Path) -> Result<()> {
        fs::write(out.join(format!("audit_{}.json", self.phase)), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.ini"), cfg.to_ini())?;
    Ok(())
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let p = p.as_deref().ok_or_else(|| Error::Config(format!("config key {key} is not set")))?;
    if !p.exists() {
        return Err(Error::Config(format!("{key} path {} does not exist", p.display())));
    }
    Ok(p)
}

pub fn load_dataset_for(cfg: &RunConfig) -> Result<LabeledDataset> {
    LabeledDataset::load(required(&cfg.dataset, "dataset")?)
}

pub fn load_generator_for(cfg: &RunConfig) -> Result<Generator> {
    Generator::load(required(&cfg.generator, "generator")?)
}

pub fn meta_split(cfg: &RunConfig, ds: &LabeledDataset) -> Result<MetaSplit> {
    split_classes(ds.n_classes(), cfg.split, cfg.seed)
}

/// Classifier (`head = Some(n)`) or embedding (`head = None`) network for the
/// given sample shape.
pub fn learner_arch(cfg: &RunConfig, kind: SampleKind, shape: &[usize], head: Option<usize>) -> Result<Architecture> {
    let conv = match cfg.arch {
        ArchName::Auto => kind == SampleKind::Image,
        ArchName::Conv4 => true,
        ArchName::Mlp => false,
    };
    if conv {
        let [h, w, c]: [usize; 3] =
            shape.try_into().map_err(|_| Error::Config(format!("conv4 needs [h, w, c] samples, got {shape:?}")))?;
        return Architecture::conv4([h, w, c], cfg.filters, head);
    }
    let mut arch = Architecture::mlp(numel(shape), &cfg.hidden, head, cfg.batch_norm);
    if shape.len() > 1 {
        arch.layers.insert(0, Layer::Flatten);
        arch.input = shape.to_vec();
    }
    arch.output_shape()?;
    Ok(arch)
}

fn head(cfg: &RunConfig, kind: LearnerKind) -> Option<usize> {
    match kind {
        LearnerKind::Maml => Some(cfg.n_way),
        LearnerKind::Proto => None,
    }
}

/// The task policy with `eps_dist = auto` resolved from the generator.
pub fn resolve_policy(cfg: &RunConfig, gen: &Generator) -> Result<TaskPolicy> {
    let eps = match (cfg.eps_dist, gen.eps_dist()) {
        (Some(e), _) | (None, Some(e)) => e,
        (None, None) => calibrate_eps_dist(gen, CALIBRATION_PAIRS, &mut stream(cfg.seed, domain::TRAIN_GEN, 1)),
    };
    TaskPolicy::new(cfg.policy_kind(), eps, cfg.max_attempts)
}

#[derive(Clone, Debug)]
pub struct SyntheticOutput {
    pub dataset: PathBuf,
    pub generator: PathBuf,
}

/// Builds the synthetic benchmark and its analytic generator.
pub fn cmd_make_synthetic(cfg: &RunConfig) -> Result<SyntheticOutput> {
    prepare_out(cfg)?;
    let (ds, mut gen) = make_synthetic_with(&cfg.synthetic, cfg.seed)?;
    let eps = calibrate_eps_dist(&gen, CALIBRATION_PAIRS, &mut stream(cfg.seed, domain::TRAIN_GEN, 1));
    gen.set_eps_dist(eps);
    let out =
        SyntheticOutput { dataset: cfg.out.join(SYNTH_DATASET_FILE), generator: cfg.out.join(SYNTH_GENERATOR_FILE) };
    ds.save(&out.dataset)?;
    gen.save(&out.generator)?;
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct TrainGenOutput {
    pub path: PathBuf,
    pub generator: Generator,
}

/// Trains a generator on unlabelled samples and stores it with its
/// calibrated anchor threshold.
pub fn cmd_train_gen(cfg: &RunConfig) -> Result<TrainGenOutput> {
    prepare_out(cfg)?;
    let ds = load_dataset_for(cfg)?;
    let samples = match cfg.gen_train_set {
        GenTrainSet::Train => ds.unlabeled_subset(&meta_split(cfg, &ds)?.train_classes),
        GenTrainSet::All => ds.samples().clone(),
    };
    let mut rng = stream(cfg.seed, domain::TRAIN_GEN, 0);
    let mut gen = match cfg.generator_kind {
        GenKindName::Vae => train_vae(&samples, ds.kind(), &cfg.vae, &mut rng)?,
        #[cfg(feature = "gan")]
        GenKindName::Gan => crate::genmodel::train_gan(&samples, ds.kind(), &cfg.gan, &mut rng)?.0,
        #[cfg(not(feature = "gan"))]
        GenKindName::Gan => return Err(Error::UnsupportedOperation("built without GAN support".into())),
    };
    let eps = calibrate_eps_dist(&gen, CALIBRATION_PAIRS, &mut stream(cfg.seed, domain::TRAIN_GEN, 1));
    gen.set_eps_dist(eps);
    let path = cfg.out.join(GENERATOR_FILE);
    gen.save(&path)?;
    Ok(TrainGenOutput { path, generator: gen })
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub checkpoint: LearnerCheckpoint,
    pub optimizer: Optimizer,
    pub metrics: Vec<MetricsRow>,
}

/// Runs `cfg.meta_iterations` meta-updates on batches from `next_batch`.
fn meta_train_loop(
    cfg: &RunConfig,
    mut params: NetworkParams,
    mut next_batch: impl FnMut(usize) -> Result<MetaBatch>,
) -> Result<TrainOutput> {
    let clock = Clock::new(cfg);
    let mut opt = Optimizer::new(OptimizerConfig::adam(cfg.meta_lr()), &params.tensors);
    let mut metrics = Vec::with_capacity(cfg.meta_iterations);
    for it in 1..=cfg.meta_iterations {
        let batch = next_batch(it)?;
        let (next, loss) = match cfg.learner {
            LearnerKind::Maml => maml_meta_step(&params, &batch, &cfg.maml, &mut opt)?,
            LearnerKind::Proto => proto_meta_step(&params, &batch, &cfg.proto, &mut opt)?,
        };
        params = next;
        metrics.push(MetricsRow { iteration: it, meta_loss: loss, wall_ms: clock.ms() });
    }
    Ok(TrainOutput { checkpoint: LearnerCheckpoint { kind: cfg.learner, params }, optimizer: opt, metrics })
}

fn write_training(out: &TrainOutput, dir: &Path, learner: &str, optimizer: &str, metrics: &str) -> Result<()> {
    out.checkpoint.save(dir.join(learner))?;
    save_optimizer(&out.optimizer, dir.join(optimizer))?;
    fs::write(dir.join(metrics), metrics_csv(&out.metrics))?;
    Ok(())
}

fn init_params(cfg: &RunConfig, kind: SampleKind, shape: &[usize]) -> Result<NetworkParams> {
    let arch = learner_arch(cfg, kind, shape, head(cfg, cfg.learner))?;
    Ok(arch.init(&mut stream(cfg.seed, domain::INIT, 0)))
}

/// Meta-trains on generator-synthesised tasks.
pub fn cmd_meta_train(cfg: &RunConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    prepare_out(cfg)?;
    let gen = load_generator_for(cfg)?;
    let policy = resolve_policy(cfg, &gen)?;
    let data = match cfg.anchor_source {
        AnchorSourceName::Prior => None,
        AnchorSourceName::Data => {
            let ds = load_dataset_for(cfg)?;
            Some(ds.unlabeled_subset(&meta_split(cfg, &ds)?.train_classes))
        }
    };
    let source = data.as_ref().map_or(AnchorSource::Prior, AnchorSource::Data);
    let params = init_params(cfg, gen.sample_kind(), gen.sample_shape())?;
    let out = meta_train_loop(cfg, params, |it| {
        let mut rng = stream(cfg.seed, domain::META_BATCH, it as u64);
        generate_meta_batch(&gen, &policy, source, cfg.n_way, cfg.k_train, cfg.k_val, cfg.meta_batch_size(), &mut rng)
    })?;
    write_training(&out, &cfg.out, LEARNER_FILE, OPTIMIZER_FILE, METRICS_FILE)?;
    Ok(out)
}

/// Labelled evaluation episode `index`; the same for every learner under one seed.
pub fn eval_episode(cfg: &RunConfig, ds: &LabeledDataset, test_classes: &[usize], index: usize) -> Result<MetaTask> {
    let mut rng = stream(cfg.seed, domain::EVAL, index as u64);
    sample_supervised_task(ds, test_classes, cfg.n_way, cfg.eval_k_train, cfg.eval_k_val, &mut rng)
}

/// Scores `cfg.n_eval_tasks` test-class episodes in parallel, reduced in index order.
fn run_episodes(
    cfg: &RunConfig,
    ds: &LabeledDataset,
    split: &MetaSplit,
    phase: &str,
    score: impl Fn(usize, &MetaTask) -> Result<f64> + Sync,
) -> Result<EpisodeReport> {
    let clock = Clock::new(cfg);
    let results = (0..cfg.n_eval_tasks)
        .into_par_iter()
        .map(|i| {
            let task = eval_episode(cfg, ds, &split.test_classes, i)?;
            let acc = score(i, &task)?;
            Ok((task, acc))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut audit = ClassAudit::new(phase, &split.test_classes);
    let mut accs = Vec::with_capacity(results.len());
    for (task, acc) in &results {
        audit.record(task)?;
        accs.push(*acc);
    }
    audit.write(&cfg.out)?;
    EpisodeReport::from_accuracies(accs, clock.ms())
}

/// Evaluates a learner checkpoint on labelled test-class episodes.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EpisodeReport> {
    cfg.validate()?;
    prepare_out(cfg)?;
    let ck = LearnerCheckpoint::load(required(&cfg.learner_checkpoint, "learner_checkpoint")?)?;
    let ds = load_dataset_for(cfg)?;
    let split = meta_split(cfg, &ds)?;
    let report =
        run_episodes(cfg, &ds, &split, "evaluate", |_, t| evaluate_episode(ck.kind, &ck.params, t, &cfg.maml))?;
    report.write(&cfg.out, REPORT_STEM)?;
    Ok(report)
}

/// Trains a freshly initialised classifier on each episode's train split.
pub fn cmd_baseline_scratch(cfg: &RunConfig) -> Result<EpisodeReport> {
    cfg.validate()?;
    prepare_out(cfg)?;
    let ds = load_dataset_for(cfg)?;
    let split = meta_split(cfg, &ds)?;
    let arch = learner_arch(cfg, ds.kind(), ds.sample_shape(), Some(cfg.n_way))?;
    let lr = cfg.scratch_lr();
    let report = run_episodes(cfg, &ds, &split, "baseline_scratch", |i, t| {
        let fresh = arch.init(&mut stream(cfg.seed, domain::SCRATCH, i as u64));
        let trained = maml_adapt(&fresh, &t.train, lr, cfg.maml.eval_adaptation_steps)?;
        let logits = forward(&trained.params, &t.val.batch()?)?;
        let predicted: Vec<usize> = (0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b })
            })
            .collect();
        Ok(crate::metalearn::accuracy(&predicted, &t.val.labels))
    })?;
    report.write(&cfg.out, SCRATCH_REPORT_STEM)?;
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct SupervisedOutput {
    pub training: TrainOutput,
    pub report: EpisodeReport,
    pub audit: ClassAudit,
}

/// Meta-trains on labelled meta-train-class tasks, then evaluates.
pub fn cmd_baseline_supervised(cfg: &RunConfig) -> Result<SupervisedOutput> {
    cfg.validate()?;
    prepare_out(cfg)?;
    let ds = load_dataset_for(cfg)?;
    let split = meta_split(cfg, &ds)?;
    let mut audit = ClassAudit::new("baseline_supervised", &split.train_classes);
    let params = init_params(cfg, ds.kind(), ds.sample_shape())?;
    let training = meta_train_loop(cfg, params, |it| {
        let base: u64 = stream(cfg.seed, domain::META_BATCH, it as u64).random();
        let tasks = (0..cfg.meta_batch_size())
            .map(|i| {
                let mut rng = stream(base, domain::TASK, i as u64);
                sample_supervised_task(&ds, &split.train_classes, cfg.n_way, cfg.k_train, cfg.k_val, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        for t in &tasks {
            audit.record(t)?;
        }
        Ok(MetaBatch { tasks })
    })?;
    audit.write(&cfg.out)?;
    write_training(&training, &cfg.out, SUPERVISED_LEARNER_FILE, SUPERVISED_OPTIMIZER_FILE, SUPERVISED_METRICS_FILE)?;
    let ck = &training.checkpoint;
    let report = run_episodes(cfg, &ds, &split, "evaluate_supervised", |_, t| {
        evaluate_episode(ck.kind, &ck.params, t, &cfg.maml)
    })?;
    report.write(&cfg.out, SUPERVISED_REPORT_STEM)?;
    Ok(SupervisedOutput { training, report, audit })
}

/// Writes `n` synthesised tasks, one directory each. Task `i` is rebuilt by
/// `generate_task_with` from `from_seed(manifest.seed)`.
pub fn cmd_dump_tasks(cfg: &RunConfig, n: usize) -> Result<Vec<PathBuf>> {
    prepare_out(cfg)?;
    let gen = load_generator_for(cfg)?;
    let policy = resolve_policy(cfg, &gen)?;
    let data = match cfg.anchor_source {
        AnchorSourceName::Prior => None,
        AnchorSourceName::Data => {
            let ds = load_dataset_for(cfg)?;
            Some(ds.unlabeled_subset(&meta_split(cfg, &ds)?.train_classes))
        }
    };
    let source = data.as_ref().map_or(AnchorSource::Prior, AnchorSource::Data);
    (0..n)
        .map(|i| {
            let seed = derive_seed(cfg.seed, domain::DUMP, i as u64);
            let task =
                generate_task_with(&gen, &policy, source, cfg.n_way, cfg.k_train, cfg.k_val, &mut from_seed(seed))?;
            let dir = cfg.out.join(format!("task_{i:04}"));
            dump_task(&task, gen.sample_kind(), seed, &dir)?;
            Ok(dir)
        })
        .collect()
}
