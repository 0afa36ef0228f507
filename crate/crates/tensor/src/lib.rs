//! Minimal dense-tensor engine with reverse-mode differentiation.
//!
//! A [`Graph`] records operations as they are applied; [`Graph::backward`]
//! replays them in reverse from a scalar output. Tensors are generic over
//! [`Scalar`] so networks train in `f32` while gradient checks run in `f64`.

mod error;
mod gradcheck;
mod graph;
mod ops;
mod scalar;
mod tensor;
mod upsample;

pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, FD_STEP, REL_ERROR_FLOOR};
pub use graph::{Gradients, Graph, Var};
pub use ops::conv::conv_output_extent;
pub use ops::elementwise::sigmoid;
pub use ops::loss::softmax_rows;
pub use ops::pool::{adaptive_pool_plan, PoolPlan};
pub use scalar::Scalar;
pub use tensor::{Tensor, MAX_RANK};
pub use upsample::bilinear_upsample;
