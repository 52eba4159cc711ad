//! Minimal CNN inference in `f32` over weights decoded from a
//! [`WeightStore`](crate::formats::WeightStore), plus Top-k evaluation.

mod eval;
mod model;
mod tensor;

pub use eval::{evaluate, in_top_k, predict, top_k_accuracy, Accuracy, EvalSet};
pub use model::{LayerSpec, Model, ModelDesc, Network};
pub use tensor::Tensor;
