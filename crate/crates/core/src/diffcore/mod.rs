//! Differentiation kernels: candidate operations with analytic backward
//! passes, the classification loss, optimizers and a finite-difference
//! checker.

pub mod gradcheck;
pub mod loss;
pub mod ops;
pub mod optim;
pub mod tensor;

pub use gradcheck::{finite_diff_check, finite_diff_check_coords};
pub use loss::{argmax_rows, softmax, softmax_cross_entropy};
pub use ops::{
    conv2d, conv2d_backward, global_avg_pool, global_avg_pool_backward, linear, linear_backward,
    op_backward, op_forward, relu, OpKind,
};
pub use optim::{adam_step, sgd_step, Parameter};
pub use tensor::Tensor;
