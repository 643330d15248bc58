use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{forward, Cogformer, ForwardOptions};
use crate::numerics::{is_masked, Scalar, Tensor};
use crate::training::tokenize_bytes;

/// White at 0, toward red for positive and toward blue for negative
/// weights; values are clamped to `[-1, 1]`.
pub fn weight_to_rgb(w: f64) -> [u8; 3] {
    let w = if w.is_finite() { w.clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |x: f64| (255.0 * x).round() as u8;
    if w > 0.0 {
        [255, fade(1.0 - w), fade(1.0 - w)]
    } else if w < 0.0 {
        [fade(1.0 + w), fade(1.0 + w), 255]
    } else {
        [255, 255, 255]
    }
}

/// Binary PPM (P6) of an `n × n` causal weight matrix; cells above the
/// diagonal are white.
pub fn attention_ppm<T: Scalar>(a: &Tensor<T>) -> Result<Vec<u8>> {
    let (n, m) = a.expect_matrix("attention_ppm")?;
    if n != m {
        return Err(Error::ShapeMismatch {
            op: "attention_ppm",
            lhs: a.shape().to_vec(),
            rhs: vec![n, n],
        });
    }
    let mut out = format!("P6\n{n} {n}\n255\n").into_bytes();
    out.reserve(3 * n * n);
    for i in 0..n {
        for j in 0..n {
            let w = a.get(i, j);
            let px = if j > i || is_masked(w) { [255; 3] } else { weight_to_rgb(w.as_f64()) };
            out.extend_from_slice(&px);
        }
    }
    Ok(out)
}

/// Writes `layer{L}_head{H}.ppm` for every head and returns the paths.
pub fn export_attention_maps<T: Scalar>(model: &Cogformer<T>, text: &str, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let tokens = tokenize_bytes(text.as_bytes());
    if tokens.is_empty() {
        return Err(Error::Config("attention export needs a nonempty text".into()));
    }
    let out = forward(
        model,
        &tokens,
        ForwardOptions {
            capture_attention: true,
            ..ForwardOptions::default()
        },
    )?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut paths = Vec::new();
    for (l, heads) in out.attention.expect("captured").iter().enumerate() {
        for (h, w) in heads.iter().enumerate() {
            let path = out_dir.join(format!("layer{l}_head{h}.ppm"));
            std::fs::write(&path, attention_ppm(&w.a)?).map_err(|e| Error::io(&path, e))?;
            paths.push(path);
        }
    }
    Ok(paths)
}
