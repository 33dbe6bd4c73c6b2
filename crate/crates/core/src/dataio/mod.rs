//! Labelled image datasets: the container, its on-disk format, synthetic
//! task families and embedding functions.

pub mod dataset;
pub mod embed;
pub mod format;
pub mod synthetic;

pub use dataset::{LabeledDataset, Manifest, Split, Splits};
pub use embed::{embed, stratified_subsample, EmbeddedDataset, EmbeddingConfig, EmbeddingKind};
pub use format::{load_dataset, save_dataset, LABELS_FILE, MANIFEST_FILE, SAMPLES_FILE};
pub use synthetic::{generate_synthetic, SyntheticFamily, SyntheticTaskSpec, TaskTransform};
