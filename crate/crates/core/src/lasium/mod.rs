//! Task synthesis by latent-space interpolation.
//!
//! A task is built from `N` latent anchors that are pairwise at least
//! `eps_dist` apart. Each anchor seeds one class; the class's remaining
//! `K_tr + K_val − 1` latents come from an in-class policy applied to the
//! anchors round by round. Every class group is `[anchor, candidates…]`:
//! the first `K_tr` go to the train split and the rest to val.

mod anchors;
mod dump;
mod generate;
mod policy;
mod task;

pub use anchors::{sample_anchors, sample_anchors_from_data, AnchorSet};
pub use dump::{contact_sheet, dump_task, load_task_dump, pgm_dimensions, read_provenance, TaskManifest};
pub use generate::{generate_meta_batch, generate_task, generate_task_with, task_stream, AnchorSource, MetaBatch};
pub use policy::{
    other_class_target, policy_noise, policy_other_classes, policy_random_out, sample_out_of_class, PolicyKind,
    TaskPolicy,
};
pub use task::{MetaTask, Provenance, TaskSplit};
