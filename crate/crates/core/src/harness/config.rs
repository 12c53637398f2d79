//! Run configuration as a flat `key = value` text file.
//!
//! Blank lines and lines starting with `#` or `;` are ignored, as are
//! `[section]` headers. Every key has a default; unknown keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::genmodel::{GanConfig, VaeConfig};
use crate::lasium::{PolicyKind, TaskPolicy};
use crate::metalearn::{LearnerKind, MamlConfig, MamlOrder, ProtoConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyName {
    Noise,
    RandomOut,
    OtherClasses,
}

impl PolicyName {
    fn as_str(self) -> &'static str {
        match self {
            PolicyName::Noise => "noise",
            PolicyName::RandomOut => "random_out",
            PolicyName::OtherClasses => "other_classes",
        }
    }
}

impl FromStr for PolicyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise" | "n" => Ok(PolicyName::Noise),
            "random_out" | "ro" => Ok(PolicyName::RandomOut),
            "other_classes" | "oc" => Ok(PolicyName::OtherClasses),
            other => Err(Error::Config(format!("unknown policy {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenKindName {
    Vae,
    Gan,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArchName {
    /// `conv4` for images, `mlp` for vectors.
    Auto,
    Mlp,
    Conv4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnchorSourceName {
    Prior,
    Data,
}

/// Which samples the generator is trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenTrainSet {
    /// Meta-train classes only.
    Train,
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub generator: Option<PathBuf>,
    pub learner_checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub deterministic: bool,

    pub split: [f64; 3],
    pub gen_train_set: GenTrainSet,

    pub generator_kind: GenKindName,
    pub vae: VaeConfig,
    pub gan: GanConfig,

    pub policy: PolicyName,
    pub noise_sigma2: f64,
    pub ro_alpha: f64,
    pub oc_alpha: f64,
    /// `None` uses the generator's calibrated threshold.
    pub eps_dist: Option<f64>,
    pub max_attempts: usize,
    pub anchor_source: AnchorSourceName,

    pub n_way: usize,
    pub k_train: usize,
    pub k_val: usize,
    pub eval_k_train: usize,
    pub eval_k_val: usize,

    pub learner: LearnerKind,
    pub maml: MamlConfig,
    pub proto: ProtoConfig,
    pub meta_iterations: usize,
    pub n_eval_tasks: usize,
    /// `None` uses `inner_lr`.
    pub scratch_lr: Option<f64>,

    pub arch: ArchName,
    pub filters: usize,
    pub hidden: Vec<usize>,
    pub batch_norm: bool,

    pub synthetic: SyntheticSpec,
    pub n_dump: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            generator: None,
            learner_checkpoint: None,
            out: PathBuf::from("out"),
            seed: 0,
            deterministic: false,
            split: [0.64, 0.16, 0.20],
            gen_train_set: GenTrainSet::Train,
            generator_kind: GenKindName::Vae,
            vae: VaeConfig::default(),
            gan: GanConfig::default(),
            policy: PolicyName::RandomOut,
            noise_sigma2: 0.5,
            ro_alpha: 0.4,
            oc_alpha: 0.2,
            eps_dist: None,
            max_attempts: TaskPolicy::DEFAULT_MAX_ATTEMPTS,
            anchor_source: AnchorSourceName::Prior,
            n_way: 5,
            k_train: 1,
            k_val: 5,
            eval_k_train: 1,
            eval_k_val: 15,
            learner: LearnerKind::Maml,
            maml: MamlConfig::default(),
            proto: ProtoConfig::default(),
            meta_iterations: 1000,
            n_eval_tasks: 1000,
            scratch_lr: None,
            arch: ArchName::Auto,
            filters: 64,
            hidden: vec![64, 64],
            batch_norm: true,
            synthetic: SyntheticSpec {
                signal_dims: 8,
                radius: 5.0,
                min_separation: 2.5,
                r_class: 0.5,
                out_dim: 32,
                nuisance_scale: 8.0,
                ..SyntheticSpec::new(48, 50, 16)
            },
            n_dump: 8,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean {value:?} for {key}"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|s| parse(key, s.trim())).collect()
}

fn parse_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn parse_auto(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or(String::new(), |p| p.display().to_string())
}

fn auto_str(v: Option<f64>) -> String {
    v.map_or("auto".into(), |v| v.to_string())
}

impl RunConfig {
    pub fn from_ini(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') || line.starts_with('[') {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_ini(&text)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = parse_path(v),
            "generator" => self.generator = parse_path(v),
            "learner_checkpoint" => self.learner_checkpoint = parse_path(v),
            "out" => self.out = PathBuf::from(v),
            "seed" => self.seed = parse(key, v)?,
            "deterministic" => self.deterministic = parse_bool(key, v)?,
            "split" => {
                let parts: Vec<f64> = v.split(',').map(|s| parse(key, s.trim())).collect::<Result<_>>()?;
                self.split = parts.try_into().map_err(|_| Error::Config("split needs three fractions".into()))?;
            }
            "gen_train_set" => {
                self.gen_train_set = match v {
                    "train" => GenTrainSet::Train,
                    "all" => GenTrainSet::All,
                    _ => return Err(Error::Config(format!("bad gen_train_set {v:?}"))),
                }
            }
            "generator_kind" => {
                self.generator_kind = match v {
                    "vae" => GenKindName::Vae,
                    "gan" => GenKindName::Gan,
                    _ => return Err(Error::Config(format!("generator_kind must be vae or gan, got {v:?}"))),
                }
            }
            "vae_latent_dim" => self.vae.latent_dim = parse(key, v)?,
            "vae_hidden" => self.vae.hidden = parse_list(key, v)?,
            "vae_epochs" => self.vae.epochs = parse(key, v)?,
            "vae_lr" => self.vae.lr = parse(key, v)?,
            "vae_kl_weight" => self.vae.kl_weight = parse(key, v)?,
            "vae_batch_size" => self.vae.batch_size = parse(key, v)?,
            "gan_latent_dim" => self.gan.latent_dim = parse(key, v)?,
            "gan_hidden" => self.gan.hidden = parse_list(key, v)?,
            "gan_epochs" => self.gan.epochs = parse(key, v)?,
            "gan_lr" => self.gan.lr = parse(key, v)?,
            "gan_batch_size" => self.gan.batch_size = parse(key, v)?,
            "policy" => self.policy = v.parse()?,
            "noise_sigma2" => self.noise_sigma2 = parse(key, v)?,
            "ro_alpha" => self.ro_alpha = parse(key, v)?,
            "oc_alpha" => self.oc_alpha = parse(key, v)?,
            "eps_dist" => self.eps_dist = parse_auto(key, v)?,
            "max_attempts" => self.max_attempts = parse(key, v)?,
            "anchor_source" => {
                self.anchor_source = match v {
                    "prior" => AnchorSourceName::Prior,
                    "data" => AnchorSourceName::Data,
                    _ => return Err(Error::Config(format!("anchor_source must be prior or data, got {v:?}"))),
                }
            }
            "n_way" => self.n_way = parse(key, v)?,
            "k_train" => self.k_train = parse(key, v)?,
            "k_val" => self.k_val = parse(key, v)?,
            "eval_k_train" => self.eval_k_train = parse(key, v)?,
            "eval_k_val" => self.eval_k_val = parse(key, v)?,
            "learner" => self.learner = v.parse()?,
            "inner_lr" => self.maml.inner_lr = parse(key, v)?,
            "meta_lr" => self.maml.meta_lr = parse(key, v)?,
            "meta_batch_size" => self.maml.meta_batch_size = parse(key, v)?,
            "adaptation_steps" => self.maml.adaptation_steps = parse(key, v)?,
            "eval_adaptation_steps" => self.maml.eval_adaptation_steps = parse(key, v)?,
            "maml_order" => {
                self.maml.order = match v {
                    "first" => MamlOrder::First,
                    "second" => MamlOrder::Second,
                    _ => return Err(Error::Config(format!("maml_order must be first or second, got {v:?}"))),
                }
            }
            "proto_meta_lr" => self.proto.meta_lr = parse(key, v)?,
            "proto_meta_batch_size" => self.proto.meta_batch_size = parse(key, v)?,
            "meta_iterations" => self.meta_iterations = parse(key, v)?,
            "n_eval_tasks" => self.n_eval_tasks = parse(key, v)?,
            "scratch_lr" => self.scratch_lr = parse_auto(key, v)?,
            "arch" => {
                self.arch = match v {
                    "auto" => ArchName::Auto,
                    "mlp" => ArchName::Mlp,
                    "conv4" => ArchName::Conv4,
                    _ => return Err(Error::Config(format!("arch must be auto, mlp or conv4, got {v:?}"))),
                }
            }
            "filters" => self.filters = parse(key, v)?,
            "hidden" => self.hidden = parse_list(key, v)?,
            "batch_norm" => self.batch_norm = parse_bool(key, v)?,
            "synth_classes" => self.synthetic.n_classes = parse(key, v)?,
            "synth_per_class" => self.synthetic.per_class = parse(key, v)?,
            "synth_latent_dim" => self.synthetic.latent_dim = parse(key, v)?,
            "synth_signal_dims" => self.synthetic.signal_dims = parse(key, v)?,
            "synth_radius" => self.synthetic.radius = parse(key, v)?,
            "synth_min_separation" => self.synthetic.min_separation = parse(key, v)?,
            "synth_r_class" => self.synthetic.r_class = parse(key, v)?,
            "synth_out_dim" => self.synthetic.out_dim = parse(key, v)?,
            "synth_nuisance_scale" => self.synthetic.nuisance_scale = parse(key, v)?,
            "n_dump" => self.n_dump = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Every key with its current value; [`from_ini`](Self::from_ini) reads it back.
    pub fn to_ini(&self) -> String {
        let policy = self.policy.as_str();
        let gen_kind = match self.generator_kind {
            GenKindName::Vae => "vae",
            GenKindName::Gan => "gan",
        };
        let arch = match self.arch {
            ArchName::Auto => "auto",
            ArchName::Mlp => "mlp",
            ArchName::Conv4 => "conv4",
        };
        let order = match self.maml.order {
            MamlOrder::First => "first",
            MamlOrder::Second => "second",
        };
        let source = match self.anchor_source {
            AnchorSourceName::Prior => "prior",
            AnchorSourceName::Data => "data",
        };
        let gen_set = match self.gen_train_set {
            GenTrainSet::Train => "train",
            GenTrainSet::All => "all",
        };
        let s = &self.synthetic;
        let pairs: Vec<(&str, String)> = vec![
            ("dataset", path_str(&self.dataset)),
            ("generator", path_str(&self.generator)),
            ("learner_checkpoint", path_str(&self.learner_checkpoint)),
            ("out", self.out.display().to_string()),
            ("seed", self.seed.to_string()),
            ("deterministic", self.deterministic.to_string()),
            ("split", self.split.map(|f| f.to_string()).join(",")),
            ("gen_train_set", gen_set.into()),
            ("generator_kind", gen_kind.into()),
            ("vae_latent_dim", self.vae.latent_dim.to_string()),
            ("vae_hidden", join(&self.vae.hidden)),
            ("vae_epochs", self.vae.epochs.to_string()),
            ("vae_lr", self.vae.lr.to_string()),
            ("vae_kl_weight", self.vae.kl_weight.to_string()),
            ("vae_batch_size", self.vae.batch_size.to_string()),
            ("gan_latent_dim", self.gan.latent_dim.to_string()),
            ("gan_hidden", join(&self.gan.hidden)),
            ("gan_epochs", self.gan.epochs.to_string()),
            ("gan_lr", self.gan.lr.to_string()),
            ("gan_batch_size", self.gan.batch_size.to_string()),
            ("policy", policy.into()),
            ("noise_sigma2", self.noise_sigma2.to_string()),
            ("ro_alpha", self.ro_alpha.to_string()),
            ("oc_alpha", self.oc_alpha.to_string()),
            ("eps_dist", auto_str(self.eps_dist)),
            ("max_attempts", self.max_attempts.to_string()),
            ("anchor_source", source.into()),
            ("n_way", self.n_way.to_string()),
            ("k_train", self.k_train.to_string()),
            ("k_val", self.k_val.to_string()),
            ("eval_k_train", self.eval_k_train.to_string()),
            ("eval_k_val", self.eval_k_val.to_string()),
            ("learner", self.learner.name().into()),
            ("inner_lr", self.maml.inner_lr.to_string()),
            ("meta_lr", self.maml.meta_lr.to_string()),
            ("meta_batch_size", self.maml.meta_batch_size.to_string()),
            ("adaptation_steps", self.maml.adaptation_steps.to_string()),
            ("eval_adaptation_steps", self.maml.eval_adaptation_steps.to_string()),
            ("maml_order", order.into()),
            ("proto_meta_lr", self.proto.meta_lr.to_string()),
            ("proto_meta_batch_size", self.proto.meta_batch_size.to_string()),
            ("meta_iterations", self.meta_iterations.to_string()),
            ("n_eval_tasks", self.n_eval_tasks.to_string()),
            ("scratch_lr", auto_str(self.scratch_lr)),
            ("arch", arch.into()),
            ("filters", self.filters.to_string()),
            ("hidden", join(&self.hidden)),
            ("batch_norm", self.batch_norm.to_string()),
            ("synth_classes", s.n_classes.to_string()),
            ("synth_per_class", s.per_class.to_string()),
            ("synth_latent_dim", s.latent_dim.to_string()),
            ("synth_signal_dims", s.signal_dims.to_string()),
            ("synth_radius", s.radius.to_string()),
            ("synth_min_separation", s.min_separation.to_string()),
            ("synth_r_class", s.r_class.to_string()),
            ("synth_out_dim", s.out_dim.to_string()),
            ("synth_nuisance_scale", s.nuisance_scale.to_string()),
            ("n_dump", self.n_dump.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_eval_tasks == 0 {
            return Err(Error::Config("n_eval_tasks must be at least 1".into()));
        }
        if self.n_way < 2 || self.k_train == 0 || self.eval_k_train == 0 || self.eval_k_val == 0 {
            return Err(Error::Config("need n_way >= 2, k_train >= 1, eval_k_train >= 1 and eval_k_val >= 1".into()));
        }
        self.maml.validate()?;
        self.proto.validate()?;
        self.policy()?;
        Ok(())
    }

    pub fn policy_kind(&self) -> PolicyKind {
        match self.policy {
            PolicyName::Noise => PolicyKind::Noise { sigma: self.noise_sigma2.sqrt() },
            PolicyName::RandomOut => PolicyKind::RandomOut { alpha: self.ro_alpha },
            PolicyName::OtherClasses => PolicyKind::OtherClasses { alpha: self.oc_alpha },
        }
    }

    /// The task policy, with `eps_dist` still to be resolved if it is `auto`.
    pub fn policy(&self) -> Result<TaskPolicy> {
        TaskPolicy::new(self.policy_kind(), self.eps_dist.unwrap_or(0.0), self.max_attempts)
    }

    pub fn scratch_lr(&self) -> f64 {
        self.scratch_lr.unwrap_or(self.maml.inner_lr)
    }

    pub fn meta_batch_size(&self) -> usize {
        match self.learner {
            LearnerKind::Maml => self.maml.meta_batch_size,
            LearnerKind::Proto => self.proto.meta_batch_size,
        }
    }

    pub fn meta_lr(&self) -> f64 {
        match self.learner {
            LearnerKind::Maml => self.maml.meta_lr,
            LearnerKind::Proto => self.proto.meta_lr,
        }
    }
}
