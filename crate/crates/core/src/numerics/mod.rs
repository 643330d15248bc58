//! Deterministic tensor substrate: storage, matrix products, row
//! reductions, elementwise maps, causal masking and seeded initialization.

mod ops;
mod rng;
mod scalar;
mod tensor;

pub(crate) use ops::gemm_acc;
pub use ops::{apply_causal_mask, map, matmul, matmul_nt, matmul_tn, rowwise, MapFn, Reduce, RowReduction};
pub use rng::{randn, Rng};
pub use scalar::{is_masked, masked, sign, Precision, Scalar};
pub use tensor::Tensor;
