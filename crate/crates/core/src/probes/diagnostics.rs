use nalgebra::{DMatrix, Schur};
use serde::{Deserialize, Serialize};

use crate::attention::AttnActivation;
use crate::error::{Error, Result};
use crate::model::{forward, layer_activation, Cogformer, ForwardOptions};
use crate::numerics::{matmul, Scalar, Tensor};
use crate::training::tokenize_bytes;

/// Attention statistics of one head over a causal window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadStats {
    /// Mean over non-degenerate rows of `|a_i0| / Σ_j |a_ij|`.
    pub sink_score: f64,
    /// Fraction of unmasked entries with `a < 0`.
    pub neg_fraction: f64,
    /// Extremes of `Σ_j |a_ij|` over non-degenerate rows.
    pub row_sum_min: f64,
    pub row_sum_max: f64,
    pub degenerate_row_count: usize,
}

impl HeadStats {
    /// Statistics of the leading `window × window` block of a causal
    /// weight matrix. Rows beyond the window never influence the result.
    pub fn from_weights<T: Scalar>(a: &Tensor<T>, window: usize) -> Result<Self> {
        let (n, m) = a.expect_matrix("head_stats")?;
        if window == 0 || window > n || window > m {
            return Err(Error::Config(format!("window {window} does not fit weights of shape {:?}", a.shape())));
        }
        let (mut sink, mut rows) = (0.0, 0usize);
        let (mut neg, mut entries) = (0usize, 0usize);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut degenerate = 0;
        for i in 0..window {
            let row = &a.row(i)[..=i];
            entries += row.len();
            neg += row.iter().filter(|&&x| x < T::zero()).count();
            let abs_sum: f64 = row.iter().map(|x| x.as_f64().abs()).sum();
            if abs_sum == 0.0 {
                degenerate += 1;
                continue;
            }
            sink += row[0].as_f64().abs() / abs_sum;
            rows += 1;
            lo = lo.min(abs_sum);
            hi = hi.max(abs_sum);
        }
        if rows == 0 {
            lo = 0.0;
            hi = 0.0;
        }
        Ok(Self {
            sink_score: if rows == 0 { 0.0 } else { sink / rows as f64 },
            neg_fraction: neg as f64 / entries as f64,
            row_sum_min: lo,
            row_sum_max: hi,
            degenerate_row_count: degenerate,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadDiagnostics {
    pub layer: usize,
    pub head: usize,
    pub activation: AttnActivation,
    #[serde(flatten)]
    pub stats: HeadStats,
    /// `None` when the eigensolver did not converge.
    pub ov_positivity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub model_tag: String,
    pub n_tokens: usize,
    pub heads: Vec<HeadDiagnostics>,
}

impl DiagnosticsReport {
    pub fn max_neg_fraction(&self) -> f64 {
        self.heads.iter().map(|h| h.stats.neg_fraction).fold(0.0, f64::max)
    }
}

pub fn attn_diagnostics<T: Scalar>(model: &Cogformer<T>, text: &str) -> Result<DiagnosticsReport> {
    let tokens = tokenize_bytes(text.as_bytes());
    let n = tokens.len();
    attn_diagnostics_tokens(model, &tokens, n)
}

/// Diagnostics over the first `window` positions of `tokens`. Because
/// attention is causal, tokens after the window leave the result unchanged.
pub fn attn_diagnostics_tokens<T: Scalar>(model: &Cogformer<T>, tokens: &[usize], window: usize) -> Result<DiagnosticsReport> {
    if tokens.is_empty() {
        return Err(Error::Config("diagnostics need a nonempty text".into()));
    }
    let out = forward(
        model,
        tokens,
        ForwardOptions {
            capture_attention: true,
            ..ForwardOptions::default()
        },
    )?;
    let attention = out.attention.expect("captured");
    let mut heads = Vec::new();
    for (layer, (per_head, params)) in attention.iter().zip(&model.layers).enumerate() {
        let activation = layer_activation(layer, &model.config)?;
        for (head, w) in per_head.iter().enumerate() {
            let (w_v, w_o) = params.attn.ov_slices(head)?;
            heads.push(HeadDiagnostics {
                layer,
                head,
                activation,
                stats: HeadStats::from_weights(&w.a, window)?,
                ov_positivity: ov_positivity(&w_v, &w_o)?,
            });
        }
    }
    Ok(DiagnosticsReport {
        model_tag: model.config.activation_policy.tag().to_string(),
        n_tokens: window,
        heads,
    })
}

/// Eigenvalue positivity `Σ Re λ / Σ |λ|` of the OV circuit
/// `w_v · w_o` (`d × d_head` times `d_head × d`).
///
/// The nonzero eigenvalues of `w_v · w_o` and `w_o · w_v` coincide, so the
/// smaller of the two products is decomposed.
pub fn ov_positivity<T: Scalar>(w_v: &Tensor<T>, w_o: &Tensor<T>) -> Result<Option<f64>> {
    let (d, hd) = w_v.expect_matrix("ov_positivity")?;
    let (hd2, d2) = w_o.expect_matrix("ov_positivity")?;
    if hd != hd2 || d != d2 {
        return Err(Error::ShapeMismatch {
            op: "ov_positivity",
            lhs: w_v.shape().to_vec(),
            rhs: w_o.shape().to_vec(),
        });
    }
    let m = if hd < d { matmul(w_o, w_v)? } else { matmul(w_v, w_o)? };
    Ok(eigenvalue_positivity(&m))
}

/// `Σ Re λ / Σ |λ|` for a square matrix; 0 when every eigenvalue is 0 and
/// `None` if the decomposition fails or the input is not finite.
pub fn eigenvalue_positivity<T: Scalar>(m: &Tensor<T>) -> Option<f64> {
    let (r, c) = m.expect_matrix("eigenvalue_positivity").ok()?;
    if r != c || !m.is_finite() {
        return None;
    }
    let mat = DMatrix::from_row_slice(r, c, &m.to_f64_vec());
    let schur = Schur::try_new(mat, f64::EPSILON, 100_000)?;
    let eig = schur.complex_eigenvalues();
    let re: f64 = eig.iter().map(|z| z.re).sum();
    let abs: f64 = eig.iter().map(|z| z.norm()).sum();
    if !re.is_finite() || !abs.is_finite() {
        return None;
    }
    Some(if abs == 0.0 { 0.0 } else { (re / abs).clamp(-1.0, 1.0) })
}
