//! Row kernels for softmax and Cog (signed-exponential) attention.
//!
//! Every kernel takes one row of masked scores (`-inf` marks masked
//! positions) and writes a row of weights; masked positions always get
//! exactly 0. Kernels return `true` when the row is degenerate, i.e. it has
//! no entries that can carry weight, in which case the output row is all
//! zeros. Normalizers are accumulated in f64 so that single-precision rows
//! of a few hundred entries still sum to one within 1e-7.

use crate::numerics::{is_masked, sign, Scalar};

/// Max-subtracted softmax over unmasked entries.
pub fn softmax_row<T: Scalar>(p: &[T], out: &mut [T]) -> bool {
    debug_assert_eq!(p.len(), out.len());
    let m = p
        .iter()
        .copied()
        .filter(|&v| !is_masked(v))
        .fold(T::neg_infinity(), T::max);
    if is_masked(m) {
        out.fill(T::zero());
        return true;
    }
    let mut z = 0.0;
    for (o, &v) in out.iter_mut().zip(p) {
        *o = if is_masked(v) { T::zero() } else { (v - m).exp() };
        z += o.as_f64();
    }
    for o in out.iter_mut() {
        *o = T::of(o.as_f64() / z);
    }
    false
}

/// Direct evaluation of the signed-exponential normalization:
///
/// ```text
/// s_j = sign(p_j),  m = max_j |p_j|,  e_j = s_j · exp(s_j · p_j − m),
/// a_j = e_j / Σ_k |e_k|
/// ```
///
/// Zero scores have `s_j = 0`, so they contribute nothing to either the
/// numerator or the normalizer. A row whose unmasked scores are all zero
/// has a vanishing normalizer and yields a zero row.
pub fn cog_row_naive<T: Scalar>(p: &[T], out: &mut [T]) -> bool {
    debug_assert_eq!(p.len(), out.len());
    let m = p
        .iter()
        .copied()
        .filter(|&v| !is_masked(v))
        .fold(T::zero(), |acc, v| acc.max(v.abs()));
    let mut denom = 0.0;
    for (o, &v) in out.iter_mut().zip(p) {
        if is_masked(v) {
            *o = T::zero();
            continue;
        }
        let s = sign(v);
        *o = s * (s * v - m).exp();
        denom += o.abs().as_f64();
    }
    if denom == 0.0 {
        out.fill(T::zero());
        return true;
    }
    for o in out.iter_mut() {
        *o = T::of(o.as_f64() / denom);
    }
    false
}

/// `sign(p) ⊙ softmax(|p|)`, where both masked and exactly-zero scores are
/// excluded from the softmax. Equal to [`cog_row_naive`] on every input.
pub fn cog_row_fast<T: Scalar>(p: &[T], out: &mut [T]) -> bool {
    debug_assert_eq!(p.len(), out.len());
    let live = |v: T| !is_masked(v) && v != T::zero();
    let m = p
        .iter()
        .copied()
        .filter(|&v| live(v))
        .fold(T::neg_infinity(), |acc, v| acc.max(v.abs()));
    if is_masked(m) {
        out.fill(T::zero());
        return true;
    }
    let mut z = 0.0;
    for (o, &v) in out.iter_mut().zip(p) {
        *o = if live(v) { (v.abs() - m).exp() } else { T::zero() };
        z += o.as_f64();
    }
    for (o, &v) in out.iter_mut().zip(p) {
        *o = sign(v) * T::of(o.as_f64() / z);
    }
    false
}

/// Vector-Jacobian product for both activations.
///
/// With `J_{jl} = δ_{jl}|a_j| − a_j a_l`, writes `grad_p = grad_a · J`,
/// i.e. `grad_p_l = g_l |a_l| − a_l Σ_j g_j a_j`. For softmax rows
/// `|a| = a` and this is the usual softmax Jacobian. The shift `m` and the
/// signs are treated as constants; masked and zero-score positions have
/// `a = 0` and so receive no gradient.
pub fn signed_softmax_row_backward<T: Scalar>(a: &[T], grad_a: &[T], grad_p: &mut [T]) {
    debug_assert_eq!(a.len(), grad_a.len());
    debug_assert_eq!(a.len(), grad_p.len());
    let mut dot = T::zero();
    for (&g, &w) in grad_a.iter().zip(a) {
        dot += g * w;
    }
    for ((o, &g), &w) in grad_p.iter_mut().zip(grad_a).zip(a) {
        *o = g * w.abs() - w * dot;
    }
}
