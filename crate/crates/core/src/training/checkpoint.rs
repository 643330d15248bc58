//! Binary checkpoint format:
//!
//! ```text
//! b"COGCKPT1" | u32 LE header length | JSON header | tensor payloads
//! ```
//!
//! The header holds the configs, the step and a tensor directory (name,
//! shape, dtype, byte offset into the payload section). Payloads are raw
//! little-endian values, contiguous and in directory order. Optimizer
//! moments are stored as extra tensors `optim.m.<name>` and `optim.v.<name>`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::optim::OptimState;
use crate::error::{CheckpointError, Error, Result};
use crate::model::{init_params_with, Cogformer, InitOptions, ModelConfig};
use crate::numerics::{Precision, Scalar, Tensor};

pub const MAGIC: &[u8; 8] = b"COGCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointConfigs {
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub configs: CheckpointConfigs,
    /// Completed optimizer steps.
    pub step: usize,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: Cogformer<T>,
    pub optim: Option<OptimState<T>>,
    pub train_config: Option<TrainConfig>,
    pub step: usize,
}

const M_PREFIX: &str = "optim.m.";
const V_PREFIX: &str = "optim.v.";

pub fn encode_checkpoint<T: Scalar>(
    model: &Cogformer<T>,
    optim: Option<&OptimState<T>>,
    train_config: Option<&TrainConfig>,
    step: usize,
) -> Result<Vec<u8>> {
    if let Some(o) = optim {
        if o.step != step as u64 {
            return Err(Error::Config(format!(
                "optimizer has taken {} steps but checkpoint step is {step}",
                o.step
            )));
        }
    }
    let mut named: Vec<(String, &Tensor<T>)> = model.params();
    if let Some(o) = optim {
        named.extend(o.m.params().into_iter().map(|(n, t)| (format!("{M_PREFIX}{n}"), t)));
        named.extend(o.v.params().into_iter().map(|(n, t)| (format!("{V_PREFIX}{n}"), t)));
    }
    let width = T::PRECISION.byte_width();
    let mut offset = 0u64;
    let mut tensors = Vec::with_capacity(named.len());
    for (name, t) in &named {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: T::PRECISION.dtype().to_string(),
            offset,
        });
        offset += (t.len() * width) as u64;
    }
    let header = CheckpointHeader {
        configs: CheckpointConfigs {
            model: model.config.clone(),
            train: train_config.cloned(),
        },
        step,
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let header_len = u32::try_from(json.len()).map_err(|_| Error::Config("checkpoint header too large".into()))?;
    let mut out = Vec::with_capacity(12 + json.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &named {
        for &x in t.data() {
            x.write_le(&mut out);
        }
    }
    Ok(out)
}

/// Writes via a temporary sibling file and a rename, so a crash never
/// leaves a half-written checkpoint at `path`.
pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    model: &Cogformer<T>,
    optim: Option<&OptimState<T>>,
    train_config: Option<&TrainConfig>,
    step: usize,
) -> Result<()> {
    let bytes = encode_checkpoint(model, optim, train_config, step)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn split_header(bytes: &[u8]) -> Result<(CheckpointHeader, &[u8])> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic {
            found: bytes[..bytes.len().min(MAGIC.len())].to_vec(),
        }
        .into());
    }
    let need = |needed: usize| -> Result<()> {
        if bytes.len() < needed {
            Err(CheckpointError::Truncated {
                needed,
                have: bytes.len(),
            }
            .into())
        } else {
            Ok(())
        }
    };
    need(12)?;
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    need(12 + header_len)?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[12..12 + header_len]).map_err(|e| CheckpointError::Header(e.to_string()))?;
    Ok((header, &bytes[12 + header_len..]))
}

pub fn decode_checkpoint_header(bytes: &[u8]) -> Result<CheckpointHeader> {
    Ok(split_header(bytes)?.0)
}

pub fn read_checkpoint_header(path: &Path) -> Result<CheckpointHeader> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint_header(&bytes)
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let (header, payload) = split_header(bytes)?;
    let config = header.configs.model.clone();
    if config.precision != T::PRECISION {
        return Err(CheckpointError::Dtype {
            name: "model".into(),
            found: config.precision.dtype().into(),
            expected: T::PRECISION.dtype().into(),
        }
        .into());
    }
    let tied = !header.tensors.iter().any(|e| e.name == "unembed");
    let has_optim = header.tensors.iter().any(|e| e.name.starts_with(M_PREFIX));
    let mut model: Cogformer<T> = init_params_with(&config, InitOptions { tie_embeddings: tied })?;
    let mut optim = has_optim.then(|| OptimState::new(&model));

    let width = T::PRECISION.byte_width();
    let mut expected_offset = 0u64;
    let mut seen = std::collections::HashSet::new();
    {
        let mut slots: Vec<(String, &mut Tensor<T>)> = model.params_mut();
        if let Some(o) = optim.as_mut() {
            slots.extend(o.m.params_mut().into_iter().map(|(n, t)| (format!("{M_PREFIX}{n}"), t)));
            slots.extend(o.v.params_mut().into_iter().map(|(n, t)| (format!("{V_PREFIX}{n}"), t)));
        }
        let mut index: std::collections::HashMap<String, &mut Tensor<T>> = slots.into_iter().collect();
        for entry in &header.tensors {
            let slot = index
                .get_mut(&entry.name)
                .ok_or_else(|| CheckpointError::UnknownTensor(entry.name.clone()))?;
            if !seen.insert(entry.name.clone()) {
                return Err(CheckpointError::Header(format!("duplicate tensor {}", entry.name)).into());
            }
            if entry.dtype != T::PRECISION.dtype() {
                return Err(CheckpointError::Dtype {
                    name: entry.name.clone(),
                    found: entry.dtype.clone(),
                    expected: T::PRECISION.dtype().into(),
                }
                .into());
            }
            if entry.shape != slot.shape() {
                return Err(CheckpointError::ShapeMismatch {
                    name: entry.name.clone(),
                    header: entry.shape.clone(),
                    expected: slot.shape().to_vec(),
                }
                .into());
            }
            if entry.offset != expected_offset {
                return Err(CheckpointError::Header(format!(
                    "tensor {} at offset {}, expected {expected_offset}",
                    entry.name, entry.offset
                ))
                .into());
            }
            let start = entry.offset as usize;
            let end = start + slot.len() * width;
            if payload.len() < end {
                return Err(CheckpointError::Truncated {
                    needed: bytes.len() - payload.len() + end,
                    have: bytes.len(),
                }
                .into());
            }
            for (x, chunk) in slot.data_mut().iter_mut().zip(payload[start..end].chunks_exact(width)) {
                *x = T::read_le(chunk);
            }
            expected_offset = end as u64;
        }
        if let Some(missing) = index.keys().find(|k| !seen.contains(*k)) {
            return Err(CheckpointError::MissingTensor(missing.clone()).into());
        }
    }
    if payload.len() as u64 != expected_offset {
        return Err(CheckpointError::Header(format!(
            "{} trailing bytes after the last tensor",
            payload.len() as u64 - expected_offset
        ))
        .into());
    }
    if let Some(o) = optim.as_mut() {
        o.step = header.step as u64;
    }
    Ok(Checkpoint {
        model,
        optim,
        train_config: header.configs.train,
        step: header.step,
    })
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Precision recorded in a checkpoint header, for choosing the element
/// type before a full load.
pub fn checkpoint_precision(path: &Path) -> Result<Precision> {
    Ok(read_checkpoint_header(path)?.configs.model.precision)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    fn small(precision: Precision) -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 8,
            d_ff: 12,
            vocab_size: 11,
            context_len: 8,
            precision,
            seed: 5,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn roundtrip_is_bit_exact_and_reencodes_identically() {
        let m: Cogformer<f32> = init_params(&small(Precision::Single)).unwrap();
        let mut st = OptimState::new(&m);
        st.m.tok_emb.fill(0.125);
        st.v.final_norm.fill(3.0e-9);
        st.step = 7;
        let cfg = TrainConfig {
            lr_peak: 0.1 + 0.2,
            ..TrainConfig::default()
        };
        let bytes = encode_checkpoint(&m, Some(&st), Some(&cfg), 7).unwrap();
        let ck: Checkpoint<f32> = decode_checkpoint(&bytes).unwrap();
        assert_eq!(ck.model, m);
        assert_eq!(ck.optim.as_ref(), Some(&st));
        assert_eq!(ck.train_config.as_ref(), Some(&cfg));
        let again = encode_checkpoint(&ck.model, ck.optim.as_ref(), ck.train_config.as_ref(), ck.step).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn tied_double_model_without_optimizer() {
        let m: Cogformer<f64> = init_params_with(&small(Precision::Double), InitOptions { tie_embeddings: true }).unwrap();
        let bytes = encode_checkpoint(&m, None, None, 0).unwrap();
        let ck: Checkpoint<f64> = decode_checkpoint(&bytes).unwrap();
        assert!(ck.model.is_tied());
        assert_eq!(ck.model, m);
        assert!(ck.optim.is_none());
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let m: Cogformer<f32> = init_params(&small(Precision::Single)).unwrap();
        let mut bytes = encode_checkpoint(&m, None, None, 0).unwrap();
        bytes[3] ^= 0x20;
        let err = decode_checkpoint::<f32>(&bytes).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(CheckpointError::BadMagic { .. })));
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn truncation_and_wrong_precision_are_rejected() {
        let m: Cogformer<f32> = init_params(&small(Precision::Single)).unwrap();
        let bytes = encode_checkpoint(&m, None, None, 0).unwrap();
        let err = decode_checkpoint::<f32>(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(CheckpointError::Truncated { .. })));
        let err = decode_checkpoint::<f64>(&bytes).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(CheckpointError::Dtype { .. })));
    }

    #[test]
    fn header_layout() {
        let m: Cogformer<f32> = init_params(&small(Precision::Single)).unwrap();
        let bytes = encode_checkpoint(&m, None, None, 3).unwrap();
        let h = decode_checkpoint_header(&bytes).unwrap();
        assert_eq!(h.step, 3);
        assert_eq!(h.tensors[0].name, "tok_emb");
        assert_eq!(h.tensors[0].offset, 0);
        assert_eq!(h.tensors[1].offset, 11 * 8 * 4);
        let json: serde_json::Value = serde_json::from_slice(&bytes[12..12 + u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize]).unwrap();
        assert!(json["configs"]["model"]["activation_policy"].is_string());
    }
}
