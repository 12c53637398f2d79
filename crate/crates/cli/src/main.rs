use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lasium_core::harness::{
    cmd_baseline_scratch, cmd_baseline_supervised, cmd_dump_tasks, cmd_evaluate, cmd_make_synthetic, cmd_meta_train,
    cmd_train_gen, RunConfig,
};
use lasium_core::{Error, ErrorClass, Result};

#[derive(Parser)]
#[command(name = "lasium", version, about = "Unsupervised meta-learning by latent-space interpolation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Zero wall-clock columns so repeated runs produce identical files.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set n_way=3`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a VAE (or GAN) on unlabelled samples and calibrate its anchor threshold.
    TrainGen {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Meta-train a learner on synthesised tasks.
    MetaTrain {
        #[arg(long)]
        generator: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluate a learner checkpoint on labelled test-class episodes.
    Evaluate {
        #[arg(long)]
        learner: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train a fresh classifier on each evaluation episode.
    BaselineScratch {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Meta-train on labelled meta-train classes, then evaluate.
    BaselineSupervised {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Write synthesised tasks with contact sheets for inspection.
    DumpTasks {
        #[arg(long)]
        generator: Option<PathBuf>,
        /// Number of tasks; defaults to the `n_dump` key.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Build the synthetic benchmark dataset and its analytic generator.
    MakeSynthetic,
}

fn config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &common.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if common.deterministic {
        cfg.deterministic = true;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = config(&cli.common)?;
    let set = |slot: &mut Option<PathBuf>, v: Option<PathBuf>| {
        if v.is_some() {
            *slot = v;
        }
    };
    match cli.command {
        Command::MakeSynthetic => {
            let out = cmd_make_synthetic(&cfg)?;
            println!("dataset {}", out.dataset.display());
            println!("generator {}", out.generator.display());
        }
        Command::TrainGen { dataset } => {
            set(&mut cfg.dataset, dataset);
            let out = cmd_train_gen(&cfg)?;
            println!("generator {} (eps_dist {})", out.path.display(), out.generator.eps_dist().unwrap_or(f64::NAN));
        }
        Command::MetaTrain { generator, dataset } => {
            set(&mut cfg.generator, generator);
            set(&mut cfg.dataset, dataset);
            let out = cmd_meta_train(&cfg)?;
            let last = out.metrics.last().map_or(f64::NAN, |r| r.meta_loss);
            println!("meta-trained {} iterations, final meta_loss {last:.4}", out.metrics.len());
        }
        Command::Evaluate { learner, dataset } => {
            set(&mut cfg.learner_checkpoint, learner);
            set(&mut cfg.dataset, dataset);
            println!("{}", cmd_evaluate(&cfg)?.summary());
        }
        Command::BaselineScratch { dataset } => {
            set(&mut cfg.dataset, dataset);
            println!("{}", cmd_baseline_scratch(&cfg)?.summary());
        }
        Command::BaselineSupervised { dataset } => {
            set(&mut cfg.dataset, dataset);
            println!("{}", cmd_baseline_supervised(&cfg)?.report.summary());
        }
        Command::DumpTasks { generator, n } => {
            set(&mut cfg.generator, generator);
            let dirs = cmd_dump_tasks(&cfg, n.unwrap_or(cfg.n_dump))?;
            println!("wrote {} tasks under {}", dirs.len(), cfg.out.display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Numerics => 3,
        ErrorClass::Io => 4,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
