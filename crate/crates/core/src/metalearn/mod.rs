//! Meta-learners that consume [`MetaTask`](crate::lasium::MetaTask)s: MAML
//! with first- or second-order meta-gradients, prototypical networks, and
//! single-episode evaluation.

mod checkpoint;
mod eval;
mod maml;
mod proto;

pub use checkpoint::{
    load_optimizer, optimizer_from_container, optimizer_to_container, save_optimizer, LearnerCheckpoint,
};
pub use eval::{accuracy, evaluate_episode, LearnerKind};
pub use maml::{
    inner_loop, maml_adapt, maml_meta_gradient, maml_meta_step, maml_task_gradient, AdaptedParams, MamlConfig,
    MamlOrder,
};
pub use proto::{
    proto_classify, proto_episode_loss, proto_log_probs, proto_meta_gradient, proto_meta_step, proto_predict,
    proto_prototypes, proto_task_gradient, squared_distances, ProtoConfig,
};
