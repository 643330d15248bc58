//! Softmax and Cog attention: score computation, row activations (with the
//! direct and the fast equivalent Cog path), backward passes and the full
//! multi-head block.

mod block;
pub mod kernels;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{matmul, matmul_nt, Scalar, Tensor};

pub use block::{multihead_block, AttnCache, BlockOptions, BlockOutput, HeadGrads, HeadParams};
pub(crate) use block::{attention_backward, attention_forward};
use kernels::{cog_row_fast, cog_row_naive, signed_softmax_row_backward, softmax_row};

/// The row activation applied to attention scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttnActivation {
    Softmax,
    Cog,
}

/// Attention weights for one head, `n_queries × n_keys`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights<T> {
    pub a: Tensor<T>,
    pub activation: AttnActivation,
    /// Rows with no weight-carrying entry (all-zero output rows).
    pub degenerate_rows: usize,
}

impl<T: Scalar> AttentionWeights<T> {
    /// Verifies the row invariants for this activation. With `causal`, also
    /// checks that every entry above the diagonal is exactly zero.
    pub fn check_invariants(&self, tol: f64, causal: bool) -> std::result::Result<(), String> {
        let (m, n) = (self.a.rows(), self.a.cols());
        for i in 0..m {
            let row = self.a.row(i);
            if row.iter().any(|v| !v.is_finite()) {
                return Err(format!("row {i} has a non-finite weight"));
            }
            if causal {
                if let Some(j) = (i + 1..n).find(|&j| row[j] != T::zero()) {
                    return Err(format!("masked entry ({i},{j}) is nonzero"));
                }
            }
            let abs_sum: f64 = row.iter().map(|v| v.abs().as_f64()).sum();
            let sum: f64 = row.iter().map(|v| v.as_f64()).sum();
            if row.iter().all(|v| *v == T::zero()) {
                if self.activation == AttnActivation::Cog {
                    continue;
                }
                return Err(format!("softmax row {i} is all zero"));
            }
            if (abs_sum - 1.0).abs() > tol {
                return Err(format!("row {i}: sum of |a| = {abs_sum}"));
            }
            match self.activation {
                AttnActivation::Softmax => {
                    if row.iter().any(|&v| v < T::zero() || v > T::one()) {
                        return Err(format!("softmax row {i} has an entry outside [0,1]"));
                    }
                }
                AttnActivation::Cog => {
                    if row.iter().any(|v| v.abs() > T::one()) || sum.abs() > 1.0 + tol {
                        return Err(format!("cog row {i} out of [-1,1] bounds"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `p = scale · q kᵀ`.
pub fn qk_scores<T: Scalar>(q: &Tensor<T>, k: &Tensor<T>, scale: f64) -> Result<Tensor<T>> {
    if scale <= 0.0 {
        return Err(Error::Config(format!("qk scale must be positive, got {scale}")));
    }
    let (_, dq) = q.expect_matrix("qk_scores")?;
    let (_, dk) = k.expect_matrix("qk_scores")?;
    if dq != dk {
        return Err(Error::ShapeMismatch {
            op: "qk_scores",
            lhs: q.shape().to_vec(),
            rhs: k.shape().to_vec(),
        });
    }
    let mut p = matmul_nt(q, k)?;
    if scale != 1.0 {
        p.scale_in_place(T::of(scale));
    }
    Ok(p)
}

fn apply_rows<T: Scalar>(
    p: &Tensor<T>,
    activation: AttnActivation,
    op: &'static str,
    kernel: fn(&[T], &mut [T]) -> bool,
) -> Result<AttentionWeights<T>> {
    let (m, _) = p.expect_matrix(op)?;
    let mut a = p.zeros_like();
    let mut degenerate_rows = 0;
    for i in 0..m {
        if kernel(p.row(i), a.row_mut(i)) {
            degenerate_rows += 1;
        }
    }
    Ok(AttentionWeights {
        a,
        activation,
        degenerate_rows,
    })
}

/// Row-wise softmax of masked scores.
pub fn softmax_rows<T: Scalar>(p_masked: &Tensor<T>) -> Result<AttentionWeights<T>> {
    apply_rows(p_masked, AttnActivation::Softmax, "softmax_rows", softmax_row)
}

/// Row-wise Cog activation evaluated literally (sign, max-abs shift,
/// signed exponential, absolute-sum normalization).
pub fn cog_rows_naive<T: Scalar>(p_masked: &Tensor<T>) -> Result<AttentionWeights<T>> {
    apply_rows(p_masked, AttnActivation::Cog, "cog_rows_naive", cog_row_naive)
}

/// Row-wise Cog activation as `sign(p) ⊙ softmax(|p|)`.
pub fn cog_rows_fast<T: Scalar>(p_masked: &Tensor<T>) -> Result<AttentionWeights<T>> {
    apply_rows(p_masked, AttnActivation::Cog, "cog_rows_fast", cog_row_fast)
}

/// Applies `activation` to masked scores (the fast path for Cog).
pub fn activate<T: Scalar>(p_masked: &Tensor<T>, activation: AttnActivation) -> Result<AttentionWeights<T>> {
    match activation {
        AttnActivation::Softmax => softmax_rows(p_masked),
        AttnActivation::Cog => cog_rows_fast(p_masked),
    }
}

/// `o = a · v`.
pub fn attn_output<T: Scalar>(a: &AttentionWeights<T>, v: &Tensor<T>) -> Result<Tensor<T>> {
    matmul(&a.a, v)
}

fn row_backward<T: Scalar>(a_row: &Tensor<T>, grad_a: &Tensor<T>, op: &'static str) -> Result<Tensor<T>> {
    a_row.check_same_shape(op, grad_a)?;
    let mut out = grad_a.zeros_like();
    signed_softmax_row_backward(a_row.data(), grad_a.data(), out.data_mut());
    Ok(out)
}

/// Gradient of the loss w.r.t. one row of Cog scores, given the row's
/// weights and the upstream gradient on them.
///
/// `p_row` is only used to validate the shape: masked and zero-score
/// positions already carry `a = 0` and receive zero gradient.
pub fn cog_backward<T: Scalar>(p_row: &Tensor<T>, a_row: &Tensor<T>, grad_a: &Tensor<T>) -> Result<Tensor<T>> {
    p_row.check_same_shape("cog_backward", a_row)?;
    row_backward(a_row, grad_a, "cog_backward")
}

/// Softmax vector-Jacobian product, `J = diag(a) − a aᵀ`.
pub fn softmax_backward<T: Scalar>(a_row: &Tensor<T>, grad_a: &Tensor<T>) -> Result<Tensor<T>> {
    row_backward(a_row, grad_a, "softmax_backward")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{apply_causal_mask, randn, Rng};
    use proptest::prelude::*;

    fn row(v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(&[1, v.len()], v).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn qk_scores_examples() {
        let i2 = Tensor::<f64>::eye(2);
        assert_eq!(qk_scores(&i2, &i2, 1.0).unwrap(), i2);

        // q kᵀ = [[2,4],[6,8]] with q = [[2,4],[6,8]], k = I
        let q = Tensor::from_rows(&[vec![2.0, 4.0], vec![6.0, 8.0]]);
        let p: Tensor<f64> = qk_scores(&q, &i2, 0.5).unwrap();
        assert_eq!(p.data(), &[1.0, 2.0, 3.0, 4.0]);

        let q = Tensor::from_rows(&[vec![1.0, 0.0]]);
        let k = Tensor::from_rows(&[vec![0.0, 3.0]]);
        assert_eq!(qk_scores::<f64>(&q, &k, 1.0).unwrap().data(), &[0.0]);

        assert!(qk_scores(&q, &Tensor::<f64>::zeros(&[1, 3]), 1.0).is_err());
        assert!(qk_scores(&q, &k, 0.0).is_err());
    }

    #[test]
    fn softmax_examples() {
        let a = softmax_rows(&row(&[0.0, 0.0])).unwrap();
        assert_eq!(a.a.data(), &[0.5, 0.5]);
        let a = softmax_rows(&row(&[0.0, 3f64.ln()])).unwrap();
        assert!(close(&a.a.to_f64_vec(), &[0.25, 0.75], 1e-15));
        let a = softmax_rows(&Tensor::<f32>::from_f64(&[1, 2], &[1000.0, 1000.0]).unwrap()).unwrap();
        assert_eq!(a.a.data(), &[0.5, 0.5]);
    }

    #[test]
    fn cog_naive_examples() {
        assert_eq!(cog_rows_naive(&row(&[1.0, -1.0])).unwrap().a.data(), &[0.5, -0.5]);
        assert_eq!(cog_rows_naive(&row(&[2.0])).unwrap().a.data(), &[1.0]);
        assert_eq!(cog_rows_naive(&row(&[-2.0])).unwrap().a.data(), &[-1.0]);
        let a = cog_rows_naive(&row(&[-3.0, -1.0])).unwrap();
        assert!(close(&a.a.to_f64_vec(), &[-0.8808, -0.1192], 1e-4));
        let z = cog_rows_naive(&row(&[0.0, 0.0])).unwrap();
        assert_eq!(z.a.data(), &[0.0, 0.0]);
        assert_eq!(z.degenerate_rows, 1);
    }

    #[test]
    fn cog_fast_examples() {
        assert_eq!(cog_rows_fast(&row(&[1.0, -1.0])).unwrap().a.data(), &[0.5, -0.5]);
        assert_eq!(cog_rows_fast(&row(&[1.0, 0.0])).unwrap().a.data(), &[1.0, 0.0]);
        assert_eq!(cog_rows_naive(&row(&[1.0, 0.0])).unwrap().a.data(), &[1.0, 0.0]);
        let z = cog_rows_fast(&row(&[0.0, 0.0])).unwrap();
        assert_eq!((z.a.data(), z.degenerate_rows), (&[0.0, 0.0][..], 1));
    }

    #[test]
    fn fast_matches_naive_on_random_single_precision_rows() {
        let mut rng = Rng::new(5, 0);
        for _ in 0..200 {
            let n = 1 + rng.below(64);
            let p: Tensor<f32> = randn(&mut rng, &[1, n], 3.0);
            let naive = cog_rows_naive(&p).unwrap();
            let fast = cog_rows_fast(&p).unwrap();
            assert!(naive.a.max_abs_diff(&fast.a).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn masked_entries_get_zero_weight() {
        let p: Tensor<f64> = randn(&mut Rng::new(1, 1), &[5, 5], 2.0);
        let masked = apply_causal_mask(&p).unwrap();
        for w in [softmax_rows(&masked).unwrap(), cog_rows_naive(&masked).unwrap(), cog_rows_fast(&masked).unwrap()] {
            w.check_invariants(1e-12, true).unwrap();
        }
    }

    #[test]
    fn attn_output_examples() {
        let a = cog_rows_fast(&row(&[1.0, -1.0])).unwrap();
        assert_eq!(attn_output(&a, &Tensor::eye(2)).unwrap().data(), &[0.5, -0.5]);

        let zero = cog_rows_fast(&row(&[0.0, 0.0])).unwrap();
        let v = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(attn_output(&zero, &v).unwrap().data(), &[0.0, 0.0]);

        let one_hot = AttentionWeights {
            a: row(&[0.0, 1.0]),
            activation: AttnActivation::Softmax,
            degenerate_rows: 0,
        };
        assert_eq!(attn_output(&one_hot, &v).unwrap().data(), &[3.0, 4.0]);
    }

    /// Row `j` of the Jacobian is the gradient for upstream `e_j`.
    fn jacobian(a: &Tensor<f64>, backward: impl Fn(&Tensor<f64>) -> Tensor<f64>) -> Vec<Vec<f64>> {
        (0..a.len())
            .map(|j| {
                let mut e = a.zeros_like();
                e.data_mut()[j] = 1.0;
                backward(&e).to_f64_vec()
            })
            .collect()
    }

    #[test]
    fn cog_backward_examples() {
        let p = row(&[1.0, -1.0]);
        let a = cog_rows_fast(&p).unwrap().a;
        let j = jacobian(&a, |g| cog_backward(&p, &a, g).unwrap());
        assert_eq!(j, vec![vec![0.25, 0.25], vec![0.25, 0.25]]);

        // Positive row: same as the softmax Jacobian.
        let p = row(&[0.3, 1.2, 2.0]);
        let a = cog_rows_fast(&p).unwrap().a;
        let jc = jacobian(&a, |g| cog_backward(&p, &a, g).unwrap());
        let js = jacobian(&a, |g| softmax_backward(&a, g).unwrap());
        for (rc, rs) in jc.iter().zip(&js) {
            assert!(close(rc, rs, 1e-15));
        }

        let g = a.zeros_like();
        assert_eq!(cog_backward(&p, &a, &g).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_backward_examples() {
        let a = row(&[1.0]);
        assert_eq!(jacobian(&a, |g| softmax_backward(&a, g).unwrap()), vec![vec![0.0]]);
        let a = row(&[0.5, 0.5]);
        assert_eq!(
            jacobian(&a, |g| softmax_backward(&a, g).unwrap()),
            vec![vec![0.25, -0.25], vec![-0.25, 0.25]]
        );
        assert_eq!(softmax_backward(&a, &a.zeros_like()).unwrap().data(), &[0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn cog_signs_follow_scores(v in prop::collection::vec(-20.0f64..20.0, 1..40)) {
            let p = row(&v);
            let a = cog_rows_fast(&p).unwrap();
            for (&w, &s) in a.a.data().iter().zip(&v) {
                prop_assert_eq!(crate::numerics::sign(w), crate::numerics::sign(s));
            }
        }

        #[test]
        fn cog_abs_sum_is_one(v in prop::collection::vec(-50.0f64..50.0, 1..40)) {
            let a = cog_rows_naive(&row(&v)).unwrap();
            if a.degenerate_rows == 0 {
                let s: f64 = a.a.data().iter().map(|x| x.abs()).sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }
    }
}
