use super::config::ModelConfig;
use crate::attention::HeadParams;
use crate::error::{Error, Result};
use crate::numerics::{randn, Rng, Scalar, Tensor};

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams<T> {
    pub w_gate: Tensor<T>,
    pub w_up: Tensor<T>,
    pub w_down: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub attn_norm: Tensor<T>,
    pub attn: HeadParams<T>,
    pub ffn_norm: Tensor<T>,
    pub ffn: FfnParams<T>,
}

/// Parameters of the toy decoder-only model.
///
/// The same structure doubles as the gradient container during training
/// (see [`Cogformer::zeros_like`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Cogformer<T> {
    pub config: ModelConfig,
    /// `vocab × d_model`.
    pub tok_emb: Tensor<T>,
    pub layers: Vec<LayerParams<T>>,
    pub final_norm: Tensor<T>,
    /// `d_model × vocab`; `None` when tied to `tok_emb`.
    pub unembed: Option<Tensor<T>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InitOptions {
    pub tie_embeddings: bool,
}

/// Untied model with normal(0, 0.02) weights, output projections scaled by
/// `1/sqrt(2·n_layers)`, unit norm gains.
pub fn init_params<T: Scalar>(config: &ModelConfig) -> Result<Cogformer<T>> {
    init_params_with(config, InitOptions::default())
}

pub fn init_params_with<T: Scalar>(config: &ModelConfig, options: InitOptions) -> Result<Cogformer<T>> {
    config.validate()?;
    if config.precision != T::PRECISION {
        return Err(Error::Config(format!(
            "config precision {:?} does not match element type {:?}",
            config.precision,
            T::PRECISION
        )));
    }
    let (v, d, f) = (config.vocab_size, config.d_model, config.d_ff);
    let seed = config.seed;
    let out_std = INIT_STD / (2.0 * config.n_layers as f64).sqrt();
    let w = |name: &str, shape: &[usize], std: f64| randn::<T>(&mut Rng::named(seed, name), shape, std);
    let ones = |n: usize| Tensor::full(&[n], T::one());

    let layers = (0..config.n_layers)
        .map(|i| {
            let p = |s: &str| format!("layers.{i}.{s}");
            Ok(LayerParams {
                attn_norm: ones(d),
                attn: HeadParams::new(
                    w(&p("attn.w_q"), &[d, d], INIT_STD),
                    w(&p("attn.w_k"), &[d, d], INIT_STD),
                    w(&p("attn.w_v"), &[d, d], INIT_STD),
                    w(&p("attn.w_o"), &[d, d], out_std),
                    config.n_heads,
                )?,
                ffn_norm: ones(d),
                ffn: FfnParams {
                    w_gate: w(&p("ffn.w_gate"), &[d, f], INIT_STD),
                    w_up: w(&p("ffn.w_up"), &[d, f], INIT_STD),
                    w_down: w(&p("ffn.w_down"), &[f, d], out_std),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Cogformer {
        config: config.clone(),
        tok_emb: w("tok_emb", &[v, d], INIT_STD),
        layers,
        final_norm: ones(d),
        unembed: (!options.tie_embeddings).then(|| w("unembed", &[d, v], INIT_STD)),
    })
}

impl<T: Scalar> Cogformer<T> {
    pub fn is_tied(&self) -> bool {
        self.unembed.is_none()
    }

    /// Same structure with every tensor zeroed.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.params_mut() {
            t.fill(T::zero());
        }
        z
    }

    /// Parameters in a fixed order with stable dotted names.
    pub fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![("tok_emb".to_string(), &self.tok_emb)];
        for (i, l) in self.layers.iter().enumerate() {
            let p = |s: &str| format!("layers.{i}.{s}");
            out.push((p("attn_norm"), &l.attn_norm));
            out.push((p("attn.w_q"), &l.attn.w_q));
            out.push((p("attn.w_k"), &l.attn.w_k));
            out.push((p("attn.w_v"), &l.attn.w_v));
            out.push((p("attn.w_o"), &l.attn.w_o));
            out.push((p("ffn_norm"), &l.ffn_norm));
            out.push((p("ffn.w_gate"), &l.ffn.w_gate));
            out.push((p("ffn.w_up"), &l.ffn.w_up));
            out.push((p("ffn.w_down"), &l.ffn.w_down));
        }
        out.push(("final_norm".to_string(), &self.final_norm));
        if let Some(u) = &self.unembed {
            out.push(("unembed".to_string(), u));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = vec![("tok_emb".to_string(), &mut self.tok_emb)];
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = |s: &str| format!("layers.{i}.{s}");
            out.push((p("attn_norm"), &mut l.attn_norm));
            out.push((p("attn.w_q"), &mut l.attn.w_q));
            out.push((p("attn.w_k"), &mut l.attn.w_k));
            out.push((p("attn.w_v"), &mut l.attn.w_v));
            out.push((p("attn.w_o"), &mut l.attn.w_o));
            out.push((p("ffn_norm"), &mut l.ffn_norm));
            out.push((p("ffn.w_gate"), &mut l.ffn.w_gate));
            out.push((p("ffn.w_up"), &mut l.ffn.w_up));
            out.push((p("ffn.w_down"), &mut l.ffn.w_down));
        }
        out.push(("final_norm".to_string(), &mut self.final_norm));
        if let Some(u) = &mut self.unembed {
            out.push(("unembed".to_string(), u));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|(_, t)| t.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Precision;

    fn small() -> ModelConfig {
        ModelConfig {
            n_layers: 3,
            n_heads: 2,
            d_model: 8,
            d_ff: 12,
            vocab_size: 20,
            context_len: 16,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a: Cogformer<f32> = init_params(&small()).unwrap();
        let b: Cogformer<f32> = init_params(&small()).unwrap();
        assert_eq!(a, b);
        let c: Cogformer<f32> = init_params(&ModelConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.tok_emb, c.tok_emb);
    }

    #[test]
    fn param_count_matches_closed_form() {
        let c = small();
        let m: Cogformer<f32> = init_params(&c).unwrap();
        // V·d + L·(2d + 4d² + 3·d·f) + d + d·V
        let expected = 20 * 8 + 3 * (2 * 8 + 4 * 64 + 3 * 8 * 12) + 8 + 8 * 20;
        assert_eq!(m.param_count(), expected);
        assert_eq!(c.param_count(false), expected);
        let t: Cogformer<f32> = init_params_with(&c, InitOptions { tie_embeddings: true }).unwrap();
        assert_eq!(t.param_count(), expected - 8 * 20);
        assert_eq!(c.param_count(true), t.param_count());
    }

    #[test]
    fn init_shapes_and_gains() {
        let m: Cogformer<f32> = init_params(&small()).unwrap();
        assert!(m.all_finite());
        assert!(m.layers.iter().all(|l| l.attn_norm.data().iter().all(|&g| g == 1.0)));
        assert_eq!(m.unembed.as_ref().unwrap().shape(), &[8, 20]);
        assert_eq!(m.layers[0].ffn.w_down.shape(), &[12, 8]);
        let names: Vec<_> = m.params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), 1 + 3 * 9 + 2);
        assert_eq!(names[1], "layers.0.attn_norm");
    }

    #[test]
    fn precision_must_match_type() {
        let c = ModelConfig {
            precision: Precision::Double,
            ..small()
        };
        assert!(init_params::<f32>(&c).is_err());
        assert!(init_params::<f64>(&c).is_ok());
    }
}
