//! Dense tensors, tape-based reverse-mode gradients, Adam, and gradient checking.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, Evaluation, GradCheckOptions, GradCheckReport, TensorCheck};
pub use params::{GradSlot, Gradients, ParamId, ParamSet};
pub use tape::{Tape, Var};
pub use tensor::{
    concat_cols, conv1d, cross_entropy, matmul, matmul_nt, relu, softmax_rows, Float, Precision, Tensor,
    LOG_FLOOR,
};

use rand::Rng;

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Float, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(shape, limit, rng)
}

pub fn uniform<T: Float, R: Rng + ?Sized>(shape: &[usize], limit: f64, rng: &mut R) -> Tensor<T> {
    let len = shape.iter().product();
    let data = (0..len).map(|_| T::of(rng.gen_range(-limit..=limit))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and length agree")
}
