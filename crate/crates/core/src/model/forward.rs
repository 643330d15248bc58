use super::config::layer_activation;
use super::layers::{rms_norm_backward, rms_norm_forward, swiglu_backward, swiglu_forward, FfnCache};
use super::params::Cogformer;
use crate::attention::{attention_backward, attention_forward, AttentionWeights, AttnCache, BlockOptions};
use crate::error::{Error, Result};
use crate::numerics::{matmul, matmul_nt, matmul_tn, Scalar, Tensor};

/// What to capture during a forward pass, plus ablation hooks that zero a
/// sublayer's contribution to the residual stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ForwardOptions {
    pub capture_hidden: bool,
    pub capture_attention: bool,
    pub ablate_attention: bool,
    pub ablate_ffn: bool,
}

impl ForwardOptions {
    pub fn capture_all() -> Self {
        Self {
            capture_hidden: true,
            capture_attention: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    /// `n × vocab`.
    pub logits: Tensor<T>,
    /// Residual stream after the final RMSNorm, `n × d_model`.
    pub final_hidden: Tensor<T>,
    /// Residual stream after the embedding and after each layer
    /// (`n_layers + 1` entries), before the final norm.
    pub hidden_states: Option<Vec<Tensor<T>>>,
    /// `[layer][head]` attention weights.
    pub attention: Option<Vec<Vec<AttentionWeights<T>>>>,
}

struct LayerCache<T> {
    x_in: Tensor<T>,
    inv_attn: Vec<T>,
    attn: AttnCache<T>,
    x_mid: Tensor<T>,
    inv_ffn: Vec<T>,
    ffn: FfnCache<T>,
}

pub(crate) struct ModelCache<T> {
    tokens: Vec<usize>,
    layers: Vec<LayerCache<T>>,
    x_final: Tensor<T>,
    inv_final: Vec<T>,
    final_hidden: Tensor<T>,
}

fn check_tokens<T: Scalar>(model: &Cogformer<T>, tokens: &[usize]) -> Result<()> {
    let c = &model.config;
    if tokens.is_empty() {
        return Err(Error::Config("empty token sequence".into()));
    }
    if tokens.len() > c.context_len {
        return Err(Error::ContextOverflow {
            len: tokens.len(),
            context: c.context_len,
        });
    }
    if let Some(&token) = tokens.iter().find(|&&t| t >= c.vocab_size) {
        return Err(Error::OutOfVocab {
            token,
            vocab: c.vocab_size,
        });
    }
    Ok(())
}

fn run<T: Scalar>(model: &Cogformer<T>, tokens: &[usize], opts: ForwardOptions) -> Result<(ForwardOutput<T>, ModelCache<T>)> {
    check_tokens(model, tokens)?;
    let c = &model.config;
    let n = tokens.len();
    let d = c.d_model;
    let mut x = Tensor::zeros(&[n, d]);
    for (i, &t) in tokens.iter().enumerate() {
        x.row_mut(i).copy_from_slice(model.tok_emb.row(t));
    }

    let block_opts = BlockOptions {
        rope_base: c.rope_base,
        qk_scale_enabled: c.qk_scale_enabled,
        capture: false,
    };
    let mut hidden = opts.capture_hidden.then(|| vec![x.clone()]);
    let mut attention = opts.capture_attention.then(Vec::new);
    let mut caches = Vec::with_capacity(c.n_layers);

    for (li, layer) in model.layers.iter().enumerate() {
        let activation = layer_activation(li, c)?;
        let x_in = x.clone();
        let (h1, inv_attn) = rms_norm_forward(&x, &layer.attn_norm, c.norm_eps)?;
        let (attn_out, attn_cache) = attention_forward(&h1, &layer.attn, activation, &block_opts)?;
        if !opts.ablate_attention {
            x.add_assign(&attn_out)?;
        }
        if let Some(a) = attention.as_mut() {
            a.push(attn_cache.weights.clone());
        }
        let x_mid = x.clone();
        let (h2, inv_ffn) = rms_norm_forward(&x, &layer.ffn_norm, c.norm_eps)?;
        let (ffn_out, ffn_cache) = swiglu_forward(&h2, &layer.ffn.w_gate, &layer.ffn.w_up, &layer.ffn.w_down)?;
        if !opts.ablate_ffn {
            x.add_assign(&ffn_out)?;
        }
        if let Some(h) = hidden.as_mut() {
            h.push(x.clone());
        }
        caches.push(LayerCache {
            x_in,
            inv_attn,
            attn: attn_cache,
            x_mid,
            inv_ffn,
            ffn: ffn_cache,
        });
    }

    let (final_hidden, inv_final) = rms_norm_forward(&x, &model.final_norm, c.norm_eps)?;
    let logits = match &model.unembed {
        Some(u) => matmul(&final_hidden, u)?,
        None => matmul_nt(&final_hidden, &model.tok_emb)?,
    };
    let out = ForwardOutput {
        logits,
        final_hidden: final_hidden.clone(),
        hidden_states: hidden,
        attention,
    };
    let cache = ModelCache {
        tokens: tokens.to_vec(),
        layers: caches,
        x_final: x,
        inv_final,
        final_hidden,
    };
    Ok((out, cache))
}

/// embed → per layer `[x += attn(norm(x)); x += ffn(norm(x))]` → final norm
/// → unembed.
pub fn forward<T: Scalar>(model: &Cogformer<T>, tokens: &[usize], opts: ForwardOptions) -> Result<ForwardOutput<T>> {
    Ok(run(model, tokens, opts)?.0)
}

/// Mean next-token negative log-likelihood in nats. Position `t` predicts
/// `tokens[t + 1]`; the last position has no target.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, tokens: &[usize]) -> Result<f64> {
    Ok(cross_entropy_with_grad(logits, tokens, false)?.0)
}

fn cross_entropy_with_grad<T: Scalar>(logits: &Tensor<T>, tokens: &[usize], want_grad: bool) -> Result<(f64, Option<Tensor<T>>)> {
    let (n, v) = logits.expect_matrix("cross_entropy")?;
    if tokens.len() != n {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy",
            lhs: logits.shape().to_vec(),
            rhs: vec![tokens.len()],
        });
    }
    if n < 2 {
        return Err(Error::Config("cross_entropy needs at least two tokens".into()));
    }
    if let Some(&token) = tokens.iter().find(|&&t| t >= v) {
        return Err(Error::OutOfVocab { token, vocab: v });
    }
    let count = (n - 1) as f64;
    let mut grad = want_grad.then(|| logits.zeros_like());
    let mut total = 0.0;
    for t in 0..n - 1 {
        let row = logits.row(t);
        let target = tokens[t + 1];
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let z: T = row.iter().map(|&l| (l - m).exp()).sum();
        let lse = m + z.ln();
        total += (lse - row[target]).as_f64();
        if let Some(g) = grad.as_mut() {
            let inv_count = T::of(1.0 / count);
            for (gj, &l) in g.row_mut(t).iter_mut().zip(row) {
                *gj = (l - lse).exp() * inv_count;
            }
            g.row_mut(t)[target] -= inv_count;
        }
    }
    Ok((total / count, grad))
}

/// Loss of `tokens` and its gradient w.r.t. every parameter.
pub fn loss_and_grads<T: Scalar>(model: &Cogformer<T>, tokens: &[usize]) -> Result<(f64, Cogformer<T>)> {
    let mut grads = model.zeros_like();
    let loss = accumulate_grads(model, tokens, &mut grads, T::one())?;
    Ok((loss, grads))
}

/// Adds `weight · ∇loss(tokens)` into `grads` and returns the loss.
pub fn accumulate_grads<T: Scalar>(model: &Cogformer<T>, tokens: &[usize], grads: &mut Cogformer<T>, weight: T) -> Result<f64> {
    let (out, cache) = run(model, tokens, ForwardOptions::default())?;
    let (loss, d_logits) = cross_entropy_with_grad(&out.logits, tokens, true)?;
    let mut d_logits = d_logits.expect("requested");
    d_logits.scale_in_place(weight);
    backward(model, &cache, &d_logits, grads)?;
    Ok(loss)
}

fn backward<T: Scalar>(model: &Cogformer<T>, cache: &ModelCache<T>, d_logits: &Tensor<T>, grads: &mut Cogformer<T>) -> Result<()> {
    let c = &model.config;
    let d_final = match (&model.unembed, grads.unembed.as_mut()) {
        (Some(u), Some(gu)) => {
            gu.add_assign(&matmul_tn(&cache.final_hidden, d_logits)?)?;
            matmul_nt(d_logits, u)?
        }
        (None, None) => {
            grads.tok_emb.add_assign(&matmul_tn(d_logits, &cache.final_hidden)?)?;
            matmul(d_logits, &model.tok_emb)?
        }
        _ => return Err(Error::Config("gradient container does not match model tying".into())),
    };
    let mut dx = rms_norm_backward(&cache.x_final, &model.final_norm, &cache.inv_final, &d_final, &mut grads.final_norm);

    for (li, (layer, lc)) in model.layers.iter().zip(&cache.layers).enumerate().rev() {
        let g = &mut grads.layers[li];

        let fg = swiglu_backward(&lc.ffn, &layer.ffn.w_gate, &layer.ffn.w_up, &layer.ffn.w_down, &dx)?;
        g.ffn.w_gate.add_assign(&fg.w_gate)?;
        g.ffn.w_up.add_assign(&fg.w_up)?;
        g.ffn.w_down.add_assign(&fg.w_down)?;
        let d_mid = rms_norm_backward(&lc.x_mid, &layer.ffn_norm, &lc.inv_ffn, &fg.dx, &mut g.ffn_norm);
        dx.add_assign(&d_mid)?;

        let (d_h1, ag) = attention_backward(&layer.attn, &lc.attn, &dx)?;
        g.attn.w_q.add_assign(&ag.w_q)?;
        g.attn.w_k.add_assign(&ag.w_k)?;
        g.attn.w_v.add_assign(&ag.w_v)?;
        g.attn.w_o.add_assign(&ag.w_o)?;
        let d_in = rms_norm_backward(&lc.x_in, &layer.attn_norm, &lc.inv_attn, &d_h1, &mut g.attn_norm);
        dx.add_assign(&d_in)?;
    }

    let d = c.d_model;
    for (i, &t) in cache.tokens.iter().enumerate() {
        let src = dx.row(i);
        let dst = &mut grads.tok_emb.data_mut()[t * d..(t + 1) * d];
        for (a, &b) in dst.iter_mut().zip(src) {
            *a += b;
        }
    }
    Ok(())
}
