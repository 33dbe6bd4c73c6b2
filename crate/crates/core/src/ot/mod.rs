//! Optimal transport: ground costs, entropic Sinkhorn, an exact oracle for
//! small instances, Gaussian W2 and the dataset distance built on them.

pub mod cost;
pub mod exact;
pub mod gaussian;
pub mod otdd;
pub mod sinkhorn;

pub use cost::{cost_matrix, DiscreteDistribution};
pub use exact::{assignment_by_enumeration, exact_ot_small, hungarian};
pub use gaussian::{class_stats, gaussian_w2_squared, ClassGaussian, DEFAULT_RIDGE};
pub use otdd::{otdd_cost, otdd_distance, otdd_transport, OtSettings};
pub use sinkhorn::{marginal_error, sinkhorn, uniform, TransportResult, DEFAULT_MAX_ITER, DEFAULT_TOL};
