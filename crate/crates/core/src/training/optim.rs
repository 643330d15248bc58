use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::Cogformer;
use crate::numerics::Scalar;

const ADAM_EPS: f64 = 1e-8;

/// Global L2 clipping: if the norm over all gradients exceeds `clip`, every
/// gradient is scaled by `clip / norm`. Returns the pre-clip norm.
pub fn clip_grad_norm<T: Scalar>(grads: &mut Cogformer<T>, clip: f64) -> Result<f64> {
    if !(clip > 0.0) {
        return Err(Error::Config(format!("clip norm must be positive, got {clip}")));
    }
    let mut total = 0.0;
    for (name, g) in grads.params() {
        if !g.is_finite() {
            return Err(Error::NonFinite {
                name: format!("gradient of {name}"),
            });
        }
        total += g.sum_squares();
    }
    let norm = total.sqrt();
    if norm > clip {
        let s = T::of(clip / norm);
        for (_, g) in grads.params_mut() {
            g.scale_in_place(s);
        }
    }
    Ok(norm)
}

/// First and second moments, shaped like the model, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState<T> {
    pub m: Cogformer<T>,
    pub v: Cogformer<T>,
    pub step: u64,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(model: &Cogformer<T>) -> Self {
        Self {
            m: model.zeros_like(),
            v: model.zeros_like(),
            step: 0,
        }
    }
}

/// One AdamW update with bias correction and decoupled weight decay:
///
/// ```text
/// m ← β1 m + (1−β1) g          v ← β2 v + (1−β2) g²
/// θ ← θ − lr·λ·θ − lr · (m / (1−β1^t)) / (sqrt(v / (1−β2^t)) + ε)
/// ```
///
/// Decay applies to every parameter, norm gains included.
pub fn adamw_step<T: Scalar>(
    params: &mut Cogformer<T>,
    grads: &Cogformer<T>,
    state: &mut OptimState<T>,
    lr: f64,
    config: &TrainConfig,
) -> Result<()> {
    if !(lr >= 0.0) {
        return Err(Error::Config(format!("learning rate must be non-negative, got {lr}")));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = config.betas;
    let bc1 = T::of(1.0 - b1.powi(t));
    let bc2 = T::of(1.0 - b2.powi(t));
    let (b1, b2) = (T::of(b1), T::of(b2));
    let (one, eps) = (T::one(), T::of(ADAM_EPS));
    let lr_t = T::of(lr);
    let decay = T::of(lr * config.weight_decay);

    let grads = grads.params();
    let ms = state.m.params_mut();
    let vs = state.v.params_mut();
    for ((((name, p), (_, g)), (_, m)), (_, v)) in params.params_mut().into_iter().zip(grads).zip(ms).zip(vs) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "adamw_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        for (((pi, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            let update = lr_t * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
            *pi = *pi - decay * *pi - update;
        }
        if !p.is_finite() {
            return Err(Error::NonFinite {
                name: format!("parameter {name} after update"),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};
    use crate::numerics::Precision;

    fn model() -> Cogformer<f64> {
        init_params(&ModelConfig {
            n_layers: 1,
            n_heads: 1,
            d_model: 4,
            d_ff: 4,
            vocab_size: 5,
            context_len: 4,
            precision: Precision::Double,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    fn fill(g: &mut Cogformer<f64>, value: f64) {
        for (_, t) in g.params_mut() {
            t.fill(value);
        }
    }

    #[test]
    fn clipping_scales_down_only_above_threshold() {
        let m = model();
        let count = m.param_count() as f64;
        let mut g = m.zeros_like();
        fill(&mut g, 2.0 / count.sqrt());
        let norm = clip_grad_norm(&mut g, 1.0).unwrap();
        assert!((norm - 2.0).abs() < 1e-12);
        let after: f64 = g.params().iter().map(|(_, t)| t.sum_squares()).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-6);
        assert!((g.tok_emb.data()[0] - 1.0 / count.sqrt()).abs() < 1e-15);

        let mut g = m.zeros_like();
        fill(&mut g, 0.5 / count.sqrt());
        let before = g.clone();
        let norm = clip_grad_norm(&mut g, 1.0).unwrap();
        assert!((norm - 0.5).abs() < 1e-12);
        assert_eq!(g, before);
    }

    #[test]
    fn clipping_reports_non_finite_parameter() {
        let mut g = model().zeros_like();
        g.layers[0].attn.w_k.data_mut()[3] = f64::NAN;
        match clip_grad_norm(&mut g, 1.0) {
            Err(Error::NonFinite { name }) => assert!(name.contains("layers.0.attn.w_k")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_gradient_applies_pure_decay() {
        let mut p = model();
        let original = p.clone();
        let g = p.zeros_like();
        let mut st = OptimState::new(&p);
        let cfg = TrainConfig::default();
        let lr = 1e-3;
        adamw_step(&mut p, &g, &mut st, lr, &cfg).unwrap();
        for ((_, a), (_, b)) in p.params().iter().zip(original.params()) {
            for (&x, &x0) in a.data().iter().zip(b.data()) {
                assert_eq!(x, x0 - lr * cfg.weight_decay * x0);
            }
        }
    }

    #[test]
    fn first_step_moves_against_gradient_sign() {
        let mut p = model();
        let original = p.clone();
        let mut g = p.zeros_like();
        for (i, v) in g.tok_emb.data_mut().iter_mut().enumerate() {
            *v = if i % 2 == 0 { 0.3 } else { -2.0 };
        }
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut st = OptimState::new(&p);
        adamw_step(&mut p, &g, &mut st, 1e-2, &cfg).unwrap();
        for (i, (&x, &x0)) in p.tok_emb.data().iter().zip(original.tok_emb.data()).enumerate() {
            let step = x - x0;
            let expected = if i % 2 == 0 { -1e-2 } else { 1e-2 };
            assert!((step - expected).abs() < 1e-8, "{step}");
        }
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut p = model();
        let original = p.clone();
        let mut g = p.zeros_like();
        fill(&mut g, 0.7);
        let mut st = OptimState::new(&p);
        adamw_step(&mut p, &g, &mut st, 0.0, &TrainConfig::default()).unwrap();
        assert_eq!(p, original);
    }
}
