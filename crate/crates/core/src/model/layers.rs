//! Rotary position embedding, RMSNorm and the SwiGLU feed-forward, each
//! with its backward pass.

use crate::error::{Error, Result};
use crate::numerics::{gemm_acc, matmul, matmul_nt, matmul_tn, Scalar, Tensor};

/// Rotates consecutive coordinate pairs `(2i, 2i+1)` of each row by
/// `position · base^(−2i/d)`. `inverse` rotates by the negated angle, which
/// is also the backward pass since the map is orthogonal.
pub fn rope_rotate<T: Scalar>(x: &mut Tensor<T>, positions: &[usize], base: f64, inverse: bool) -> Result<()> {
    let (n, d) = x.expect_matrix("rope")?;
    if d % 2 != 0 {
        return Err(Error::OddHeadDim(d));
    }
    if positions.len() != n {
        return Err(Error::ShapeMismatch {
            op: "rope",
            lhs: x.shape().to_vec(),
            rhs: vec![positions.len()],
        });
    }
    let half = d / 2;
    let freqs: Vec<f64> = (0..half).map(|i| base.powf(-2.0 * i as f64 / d as f64)).collect();
    let dir = if inverse { -1.0 } else { 1.0 };
    for (r, &pos) in positions.iter().enumerate() {
        if pos == 0 {
            continue;
        }
        let row = x.row_mut(r);
        for (i, &f) in freqs.iter().enumerate() {
            let angle = dir * pos as f64 * f;
            let (s, c) = (T::of(angle.sin()), T::of(angle.cos()));
            let (x0, x1) = (row[2 * i], row[2 * i + 1]);
            row[2 * i] = x0 * c - x1 * s;
            row[2 * i + 1] = x0 * s + x1 * c;
        }
    }
    Ok(())
}

/// Rotary embedding of `x: n × d_head` at the given positions.
pub fn rope_apply<T: Scalar>(x: &Tensor<T>, positions: &[usize], base: f64) -> Result<Tensor<T>> {
    let mut out = x.clone();
    rope_rotate(&mut out, positions, base, false)?;
    Ok(out)
}

#[inline]
fn inv_rms<T: Scalar>(row: &[T], eps: T) -> T {
    let ms = row.iter().fold(T::zero(), |acc, &v| acc + v * v) / T::of(row.len() as f64);
    let denom = ms + eps;
    if denom > T::zero() {
        T::one() / denom.sqrt()
    } else {
        T::zero()
    }
}

/// `x · gain / sqrt(mean(x²) + eps)` per row. `gain` has `d` elements.
///
/// A zero row with `eps = 0` maps to zero rather than NaN.
pub fn rms_norm<T: Scalar>(x: &Tensor<T>, gain: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
    Ok(rms_norm_forward(x, gain, eps)?.0)
}

/// Returns the normalized rows and each row's `1/rms`.
pub(crate) fn rms_norm_forward<T: Scalar>(x: &Tensor<T>, gain: &Tensor<T>, eps: f64) -> Result<(Tensor<T>, Vec<T>)> {
    let d = x.cols();
    if gain.len() != d {
        return Err(Error::ShapeMismatch {
            op: "rms_norm",
            lhs: x.shape().to_vec(),
            rhs: gain.shape().to_vec(),
        });
    }
    let eps = T::of(eps);
    let g = gain.data();
    let mut out = x.clone();
    let mut invs = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = out.row_mut(i);
        let inv = inv_rms(row, eps);
        for (v, &gj) in row.iter_mut().zip(g) {
            *v = *v * inv * gj;
        }
        invs.push(inv);
    }
    Ok((out, invs))
}

/// Backward of [`rms_norm`]: returns `dx` and accumulates into `d_gain`.
pub(crate) fn rms_norm_backward<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    invs: &[T],
    dy: &Tensor<T>,
    d_gain: &mut Tensor<T>,
) -> Tensor<T> {
    let d = x.cols();
    let d_t = T::of(d as f64);
    let g = gain.data();
    let mut dx = x.zeros_like();
    for i in 0..x.rows() {
        let (xr, dyr, inv) = (x.row(i), dy.row(i), invs[i]);
        let mut dot = T::zero();
        for j in 0..d {
            dot += dyr[j] * g[j] * xr[j];
        }
        let coef = inv * inv * inv * dot / d_t;
        let dxr = dx.row_mut(i);
        for j in 0..d {
            dxr[j] = inv * g[j] * dyr[j] - xr[j] * coef;
        }
        for (dg, (&dyj, &xj)) in d_gain.data_mut().iter_mut().zip(dyr.iter().zip(xr)) {
            *dg += dyj * xj * inv;
        }
    }
    dx
}

#[inline]
fn sigmoid<T: Scalar>(t: T) -> T {
    T::one() / (T::one() + (-t).exp())
}

/// `t · σ(t)`.
#[inline]
pub fn silu<T: Scalar>(t: T) -> T {
    t * sigmoid(t)
}

#[derive(Debug, Clone)]
pub(crate) struct FfnCache<T> {
    h: Tensor<T>,
    gate: Tensor<T>,
    up: Tensor<T>,
    act: Tensor<T>,
}

/// `(silu(x·w_gate) ⊙ (x·w_up)) · w_down`.
pub fn swiglu_ffn<T: Scalar>(x: &Tensor<T>, w_gate: &Tensor<T>, w_up: &Tensor<T>, w_down: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(swiglu_forward(x, w_gate, w_up, w_down)?.0)
}

pub(crate) fn swiglu_forward<T: Scalar>(
    x: &Tensor<T>,
    w_gate: &Tensor<T>,
    w_up: &Tensor<T>,
    w_down: &Tensor<T>,
) -> Result<(Tensor<T>, FfnCache<T>)> {
    if w_gate.shape() != w_up.shape() {
        return Err(Error::ShapeMismatch {
            op: "swiglu_ffn",
            lhs: w_gate.shape().to_vec(),
            rhs: w_up.shape().to_vec(),
        });
    }
    let gate = matmul(x, w_gate)?;
    let up = matmul(x, w_up)?;
    let mut act = gate.clone();
    for (a, &u) in act.data_mut().iter_mut().zip(up.data()) {
        *a = silu(*a) * u;
    }
    let out = matmul(&act, w_down)?;
    Ok((
        out,
        FfnCache {
            h: x.clone(),
            gate,
            up,
            act,
        },
    ))
}

pub(crate) struct FfnGrads<T> {
    pub dx: Tensor<T>,
    pub w_gate: Tensor<T>,
    pub w_up: Tensor<T>,
    pub w_down: Tensor<T>,
}

pub(crate) fn swiglu_backward<T: Scalar>(
    cache: &FfnCache<T>,
    w_gate: &Tensor<T>,
    w_up: &Tensor<T>,
    w_down: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<FfnGrads<T>> {
    let d_w_down = matmul_tn(&cache.act, dy)?;
    let d_act = matmul_nt(dy, w_down)?;
    let mut d_gate = d_act.clone();
    let mut d_up = d_act;
    for ((dg, du), (&g, &u)) in d_gate
        .data_mut()
        .iter_mut()
        .zip(d_up.data_mut())
        .zip(cache.gate.data().iter().zip(cache.up.data()))
    {
        let s = sigmoid(g);
        let upstream = *dg;
        *dg = upstream * u * s * (T::one() + g * (T::one() - s));
        *du = upstream * g * s;
    }
    let d_w_gate = matmul_tn(&cache.h, &d_gate)?;
    let d_w_up = matmul_tn(&cache.h, &d_up)?;
    let (n, f) = (d_gate.rows(), d_gate.cols());
    let d = w_gate.rows();
    let mut dx = matmul_nt(&d_gate, w_gate)?;
    let wu_t = w_up.transpose()?;
    gemm_acc(dx.data_mut(), d_up.data(), wu_t.data(), n, f, d);
    Ok(FfnGrads {
        dx,
        w_gate: d_w_gate,
        w_up: d_w_up,
        w_down: d_w_down,
    })
}
