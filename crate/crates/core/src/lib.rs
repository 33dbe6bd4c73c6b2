//! Transfer of pretrained differentiable-architecture-search supernets.
//!
//! The crate trains small DARTS-style supernets, keeps them in an on-disk
//! zoo, measures dataset similarity with a label-aware optimal-transport
//! distance, and warm-starts search on a new task from the closest source.
//!
//! Modules, bottom-up:
//!
//! - [`dataio`]: labelled image datasets, synthetic task families, embeddings.
//! - [`ot`]: cost matrices, log-domain Sinkhorn, exact oracle, Gaussian W2, OTDD.
//! - [`diffcore`]: candidate operations with analytic gradients, loss, optimizers.
//! - [`supernet`]: mixed operations, first-order bilevel training, discretization.
//! - [`zoo`]: persisted supernets and warm-start weight transfer.
//! - [`pipeline`]: source selection, baselines, metrics and CSV reports.

pub mod dataio;
pub mod diffcore;
pub mod error;
pub mod ot;
pub mod pipeline;
pub mod seed;
pub mod supernet;
pub mod zoo;

pub use dataio::{
    EmbeddedDataset, EmbeddingConfig, EmbeddingKind, LabeledDataset, Split, SyntheticFamily,
    SyntheticTaskSpec, TaskTransform,
};
pub use diffcore::{OpKind, Parameter, Tensor};
pub use error::{Error, Result};
pub use ot::{ClassGaussian, DiscreteDistribution, OtSettings, TransportResult};
pub use pipeline::{ComparisonReport, DistanceReport, RunMode, RunResult};
pub use supernet::{
    ArchParams, CellGenotype, SearchSpaceConfig, SupernetState, TrainConfig, TrainingCurve,
};
pub use zoo::{ZooEntry, ZooIndex};
