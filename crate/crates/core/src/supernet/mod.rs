//! DARTS-style cell supernet: mixed operations, first-order bilevel training
//! with random logit smoothing, evaluation and discretization.

pub mod config;
pub mod genotype;
pub mod network;
pub mod state;
pub mod train;


pub use config::{SearchSpaceConfig, TrainConfig};
pub use genotype::{discretize, retrain_genotype, CellGenotype, DiscreteModel};
pub use network::mixed_forward;
pub use state::{init_supernet, ArchParams, SupernetState};
pub use train::{
    evaluate, supernet_gradients, supernet_loss, train_step, train_supernet, Batch, CurvePoint,
    StepMetrics, TrainingCurve,
};
