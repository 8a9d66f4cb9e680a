//! Tensor neural networks built on the t-product and M-product algebras.

pub mod checkpoint;
pub mod data;
pub mod error;
mod gemm;
pub mod gradcheck;
pub mod loss;
pub mod network;
pub mod products;
pub mod spectrum;
pub mod tensor;
pub mod train;
pub mod transform;

pub use checkpoint::Checkpoint;
pub use data::{Batch, Dataset};
pub use error::{Error, Result};
pub use loss::{ProbabilityMatrix, Reduction, SgdState};
pub use network::{Activation, BlockSpec, ClassifierSpec, Init, Network, NetworkSpec, Objective};
pub use products::{
    m_product, m_transpose, t_identity, t_product, t_product_with, t_transpose, tubal_apply,
    tubal_exp, tube_inverse, tube_mult,
};
pub use rustfft::num_complex::Complex64;
pub use tensor::{Matrix, Tensor3};
pub use transform::{TProductPath, Transform, TransformKind};
