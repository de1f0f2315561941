//! Dense tensors, reverse-mode differentiation, deterministic sampling and
//! optimizers. Everything trainable in the crate is built from these pieces.

pub mod gradcheck;
mod kernels;
mod optim;
mod param;
mod rng;
mod scalar;
mod suite;
mod tape;
mod tensor;

pub use kernels::{conv2d, conv_output_dim, matmul};
pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use param::{ParamId, ParamStore, Parameter};
pub use rng::Rng;
pub use scalar::Scalar;
pub use suite::{primitive_suite, PrimitiveCase};
pub use tape::{Primitive, Tape, Var};
pub use tensor::Tensor;

/// Draws i.i.d. standard-normal values of the given shape.
pub fn draw_normal(rng: &mut Rng, shape: &[usize]) -> crate::Result<Tensor> {
    rng.normal_tensor(shape)
}
