//! Labelled datasets, the LDAT file format, the synthetic benchmark,
//! class-level meta-splits and supervised episode sampling.

mod dataset;
mod episode;
mod split;
mod synthetic;

pub(crate) use dataset::quantize;
pub use dataset::{load_dataset, save_dataset, LabeledDataset, SampleKind, LDAT_MAGIC, LDAT_VERSION};
pub use episode::sample_supervised_task;
pub use split::{split_classes, MetaSplit, SplitPart};
pub use synthetic::{make_synthetic, make_synthetic_with, SyntheticSpec};
