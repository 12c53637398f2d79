//! Run configuration, the command implementations behind the CLI, and
//! evaluation reports.

mod commands;
mod config;
mod report;

pub use commands::{
    cmd_baseline_scratch, cmd_baseline_supervised, cmd_dump_tasks, cmd_evaluate, cmd_make_synthetic, cmd_meta_train,
    cmd_train_gen, eval_episode, learner_arch, load_dataset_for, load_generator_for, meta_split, resolve_policy,
    ClassAudit, SupervisedOutput, SyntheticOutput, TrainGenOutput, TrainOutput, GENERATOR_FILE, LEARNER_FILE,
    METRICS_FILE, OPTIMIZER_FILE, REPORT_STEM, SCRATCH_REPORT_STEM, SUPERVISED_LEARNER_FILE, SUPERVISED_METRICS_FILE,
    SUPERVISED_OPTIMIZER_FILE, SUPERVISED_REPORT_STEM, SYNTH_DATASET_FILE, SYNTH_GENERATOR_FILE,
};
pub use config::{AnchorSourceName, ArchName, GenKindName, GenTrainSet, PolicyName, RunConfig};
pub use report::{mean_sd, metrics_csv, EpisodeReport, MetricsRow, METRICS_HEADER, REPORT_HEADER};
