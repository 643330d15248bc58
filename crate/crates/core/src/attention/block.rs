use super::{activate, qk_scores, AttentionWeights, AttnActivation};
use crate::error::{Error, Result};
use crate::model::layers::rope_rotate;
use crate::numerics::{apply_causal_mask, matmul, matmul_nt, matmul_tn, Scalar, Tensor};

/// Projection matrices of one attention block, all `d_model × d_model`.
///
/// Head `h` owns columns `h·head_dim .. (h+1)·head_dim` of `w_q`, `w_k`,
/// `w_v` and the matching rows of `w_o`, so its OV circuit is
/// `w_v[:, h] · w_o[h, :]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<T> {
    pub w_q: Tensor<T>,
    pub w_k: Tensor<T>,
    pub w_v: Tensor<T>,
    pub w_o: Tensor<T>,
    pub n_heads: usize,
    pub head_dim: usize,
}

impl<T: Scalar> HeadParams<T> {
    pub fn new(w_q: Tensor<T>, w_k: Tensor<T>, w_v: Tensor<T>, w_o: Tensor<T>, n_heads: usize) -> Result<Self> {
        let d = w_q.rows();
        if n_heads == 0 || d % n_heads != 0 {
            return Err(Error::Config(format!("d_model {d} not divisible by {n_heads} heads")));
        }
        for w in [&w_q, &w_k, &w_v, &w_o] {
            if w.shape() != [d, d] {
                return Err(Error::ShapeMismatch {
                    op: "HeadParams::new",
                    lhs: w.shape().to_vec(),
                    rhs: vec![d, d],
                });
            }
        }
        Ok(Self {
            w_q,
            w_k,
            w_v,
            w_o,
            n_heads,
            head_dim: d / n_heads,
        })
    }

    pub fn d_model(&self) -> usize {
        self.n_heads * self.head_dim
    }

    /// `w_v` columns and `w_o` rows belonging to head `h`.
    pub fn ov_slices(&self, h: usize) -> Result<(Tensor<T>, Tensor<T>)> {
        let lo = h * self.head_dim;
        Ok((
            self.w_v.column_block(lo, self.head_dim)?,
            self.w_o.row_block(lo, self.head_dim)?,
        ))
    }

    /// Scale applied to `q kᵀ`.
    pub fn score_scale(&self, qk_scale_enabled: bool) -> f64 {
        if qk_scale_enabled {
            1.0 / (self.head_dim as f64).sqrt()
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockOptions {
    pub rope_base: f64,
    pub qk_scale_enabled: bool,
    /// Return per-head attention weights.
    pub capture: bool,
}

impl Default for BlockOptions {
    fn default() -> Self {
        Self {
            rope_base: 10_000.0,
            qk_scale_enabled: true,
            capture: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockOutput<T> {
    pub out: Tensor<T>,
    pub weights: Option<Vec<AttentionWeights<T>>>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttnCache<T> {
    x: Tensor<T>,
    q: Vec<Tensor<T>>,
    k: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    pub(crate) weights: Vec<AttentionWeights<T>>,
    concat: Tensor<T>,
    scale: f64,
    rope_base: f64,
}

#[derive(Debug, Clone)]
pub struct HeadGrads<T> {
    pub w_q: Tensor<T>,
    pub w_k: Tensor<T>,
    pub w_v: Tensor<T>,
    pub w_o: Tensor<T>,
}

/// Causal multi-head attention over `x: n × d_model`: project to q/k/v,
/// rotate q and k, split heads, mask, activate, mix values, concatenate
/// and project out.
pub fn multihead_block<T: Scalar>(
    x: &Tensor<T>,
    params: &HeadParams<T>,
    activation: AttnActivation,
    options: &BlockOptions,
) -> Result<BlockOutput<T>> {
    let (out, cache) = attention_forward(x, params, activation, options)?;
    Ok(BlockOutput {
        out,
        weights: options.capture.then_some(cache.weights),
    })
}

pub(crate) fn attention_forward<T: Scalar>(
    x: &Tensor<T>,
    params: &HeadParams<T>,
    activation: AttnActivation,
    options: &BlockOptions,
) -> Result<(Tensor<T>, AttnCache<T>)> {
    let (n, d) = x.expect_matrix("multihead_block")?;
    if d != params.d_model() {
        return Err(Error::ShapeMismatch {
            op: "multihead_block",
            lhs: x.shape().to_vec(),
            rhs: vec![n, params.d_model()],
        });
    }
    let hd = params.head_dim;
    let scale = params.score_scale(options.qk_scale_enabled);
    let positions: Vec<usize> = (0..n).collect();

    let q_full = matmul(x, &params.w_q)?;
    let k_full = matmul(x, &params.w_k)?;
    let v_full = matmul(x, &params.w_v)?;

    let mut concat = Tensor::zeros(&[n, d]);
    let (mut qs, mut ks, mut vs, mut weights) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for h in 0..params.n_heads {
        let lo = h * hd;
        let mut q = q_full.column_block(lo, hd)?;
        let mut k = k_full.column_block(lo, hd)?;
        let v = v_full.column_block(lo, hd)?;
        rope_rotate(&mut q, &positions, options.rope_base, false)?;
        rope_rotate(&mut k, &positions, options.rope_base, false)?;

        let p = apply_causal_mask(&qk_scores(&q, &k, scale)?)?;
        let a = activate(&p, activation)?;
        let o = matmul(&a.a, &v)?;
        for i in 0..n {
            concat.row_mut(i)[lo..lo + hd].copy_from_slice(o.row(i));
        }
        qs.push(q);
        ks.push(k);
        vs.push(v);
        weights.push(a);
    }
    let out = matmul(&concat, &params.w_o)?;
    let cache = AttnCache {
        x: x.clone(),
        q: qs,
        k: ks,
        v: vs,
        weights,
        concat,
        scale,
        rope_base: options.rope_base,
    };
    Ok((out, cache))
}

/// Backpropagates `dy` (gradient w.r.t. the block output) to the block
/// input and the four projections.
pub(crate) fn attention_backward<T: Scalar>(
    params: &HeadParams<T>,
    cache: &AttnCache<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, HeadGrads<T>)> {
    let n = cache.x.rows();
    let d = params.d_model();
    let hd = params.head_dim;
    let positions: Vec<usize> = (0..n).collect();
    let scale = T::of(cache.scale);

    let d_wo = matmul_tn(&cache.concat, dy)?;
    let d_concat = matmul_nt(dy, &params.w_o)?;

    let mut dq_full = Tensor::zeros(&[n, d]);
    let mut dk_full = Tensor::zeros(&[n, d]);
    let mut dv_full = Tensor::zeros(&[n, d]);
    for h in 0..params.n_heads {
        let lo = h * hd;
        let a = &cache.weights[h].a;
        let d_o = d_concat.column_block(lo, hd)?;
        let d_a = matmul_nt(&d_o, &cache.v[h])?;
        let d_v = matmul_tn(a, &d_o)?;
        let mut d_p = d_a.zeros_like();
        for i in 0..n {
            super::kernels::signed_softmax_row_backward(a.row(i), d_a.row(i), d_p.row_mut(i));
        }
        d_p.scale_in_place(scale);
        let mut d_q = matmul(&d_p, &cache.k[h])?;
        let mut d_k = matmul_tn(&d_p, &cache.q[h])?;
        rope_rotate(&mut d_q, &positions, cache.rope_base, true)?;
        rope_rotate(&mut d_k, &positions, cache.rope_base, true)?;
        for i in 0..n {
            dq_full.row_mut(i)[lo..lo + hd].copy_from_slice(d_q.row(i));
            dk_full.row_mut(i)[lo..lo + hd].copy_from_slice(d_k.row(i));
            dv_full.row_mut(i)[lo..lo + hd].copy_from_slice(d_v.row(i));
        }
    }
    let grads = HeadGrads {
        w_q: matmul_tn(&cache.x, &dq_full)?,
        w_k: matmul_tn(&cache.x, &dk_full)?,
        w_v: matmul_tn(&cache.x, &dv_full)?,
        w_o: d_wo,
    };
    let mut dx = matmul_nt(&dq_full, &params.w_q)?;
    dx.add_assign(&matmul_nt(&dk_full, &params.w_k)?)?;
    dx.add_assign(&matmul_nt(&dv_full, &params.w_v)?)?;
    Ok((dx, grads))
}
