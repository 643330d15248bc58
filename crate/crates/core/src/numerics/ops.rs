use super::scalar::{is_masked, masked, sign, Scalar};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Row reductions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reduce {
    Max,
    Sum,
    /// Maximum of `|x|`, skipping masked entries.
    AbsMax,
    /// Sum of `|x|`, skipping masked entries.
    AbsSum,
}

/// Per-row reduction result. `degenerate[i]` is set when row `i` had no
/// entries left to reduce; its value is then 0 (or `-inf` for `Max`).
#[derive(Debug, Clone, PartialEq)]
pub struct RowReduction<T> {
    pub values: Tensor<T>,
    pub degenerate: Vec<bool>,
}

/// Elementwise maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapFn {
    Exp,
    /// `sign(0) = 0`.
    Sign,
    Abs,
    Neg,
    Scale(f64),
}

/// `out += a · b` for row-major `a: m×k`, `b: k×n`.
///
/// Each output element accumulates its `k` products in ascending order,
/// starting from the existing value. The 4-way unroll only saves loads and
/// stores; the addition sequence is unchanged, so results are bit-stable.
pub(crate) fn gemm_acc<T: Scalar>(out: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(out.len(), m * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        let mut p = 0;
        while p + 4 <= k {
            let (a0, a1, a2, a3) = (arow[p], arow[p + 1], arow[p + 2], arow[p + 3]);
            let b0 = &b[p * n..(p + 1) * n];
            let b1 = &b[(p + 1) * n..(p + 2) * n];
            let b2 = &b[(p + 2) * n..(p + 3) * n];
            let b3 = &b[(p + 3) * n..(p + 4) * n];
            for ((((o, &x0), &x1), &x2), &x3) in orow.iter_mut().zip(b0).zip(b1).zip(b2).zip(b3) {
                let mut acc = *o;
                acc = acc + a0 * x0;
                acc = acc + a1 * x1;
                acc = acc + a2 * x2;
                acc = acc + a3 * x3;
                *o = acc;
            }
            p += 4;
        }
        while p < k {
            let ap = arow[p];
            for (o, &x) in orow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o = *o + ap * x;
            }
            p += 1;
        }
    }
}

/// Matrix product `a · b`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.expect_matrix("matmul")?;
    let (k2, n) = b.expect_matrix("matmul")?;
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = vec![T::zero(); m * n];
    gemm_acc(&mut out, a.data(), b.data(), m, k, n);
    Tensor::new(vec![m, n], out)
}

/// `a · bᵀ`.
pub fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    matmul(a, &b.transpose()?)
}

/// `aᵀ · b`.
pub fn matmul_tn<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    matmul(&a.transpose()?, b)
}

pub fn rowwise<T: Scalar>(x: &Tensor<T>, reduce: Reduce) -> Result<RowReduction<T>> {
    let (m, _) = x.expect_matrix("rowwise")?;
    let mut values = Vec::with_capacity(m);
    let mut degenerate = Vec::with_capacity(m);
    for i in 0..m {
        let row = x.row(i);
        let (v, empty) = match reduce {
            Reduce::Max => {
                let v = row.iter().copied().fold(T::neg_infinity(), T::max);
                (v, row.is_empty() || is_masked(v))
            }
            Reduce::Sum => (row.iter().copied().fold(T::zero(), |a, b| a + b), row.is_empty()),
            Reduce::AbsMax | Reduce::AbsSum => {
                let mut acc = T::zero();
                let mut seen = false;
                for &v in row.iter().filter(|&&v| !is_masked(v)) {
                    seen = true;
                    acc = if reduce == Reduce::AbsMax {
                        acc.max(v.abs())
                    } else {
                        acc + v.abs()
                    };
                }
                (acc, !seen)
            }
        };
        values.push(v);
        degenerate.push(empty);
    }
    Ok(RowReduction {
        values: Tensor::new(vec![m, 1], values)?,
        degenerate,
    })
}

pub fn map<T: Scalar>(x: &Tensor<T>, f: MapFn) -> Tensor<T> {
    let apply: Box<dyn Fn(T) -> T> = match f {
        MapFn::Exp => Box::new(|v: T| v.exp()),
        MapFn::Sign => Box::new(sign),
        MapFn::Abs => Box::new(|v: T| v.abs()),
        MapFn::Neg => Box::new(|v: T| -v),
        MapFn::Scale(c) => {
            let c = T::of(c);
            Box::new(move |v: T| v * c)
        }
    };
    let data = x.data().iter().map(|&v| apply(v)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

/// Replaces every entry above the diagonal with the masked sentinel.
pub fn apply_causal_mask<T: Scalar>(p: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = p.expect_matrix("apply_causal_mask")?;
    if m != n {
        return Err(Error::ShapeMismatch {
            op: "apply_causal_mask",
            lhs: vec![m, n],
            rhs: vec![n, n],
        });
    }
    let mut out = p.clone();
    for i in 0..n {
        for v in &mut out.row_mut(i)[i + 1..] {
            *v = masked();
        }
    }
    Ok(out)
}
