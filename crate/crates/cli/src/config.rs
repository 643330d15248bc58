use std::path::{Path, PathBuf};

use cogattn::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: None,
            out_dir: PathBuf::from("out"),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub paths: Paths,
}

/// Recursively overlays `patch` onto `base`. Keys absent from `base` are
/// kept so that deserialization can reject them by name.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies `a.b.c=value`. The value is parsed as JSON when possible and
/// taken as a plain string otherwise, so `policy=all_softmax` works
/// without quotes.
pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {assignment:?} is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("override {path:?}: {:?} is not a section", keys[..i].join("."))))?;
        if !obj.contains_key(*key) {
            return Err(CliError::Usage(format!("override {path:?}: unknown key {key:?}")));
        }
        node = obj.get_mut(*key).expect("checked");
    }
    *node = value;
    Ok(())
}

impl RunConfig {
    /// Defaults, overlaid with the file at `path` (if any), then with each
    /// dotted override in order.
    pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut tree = serde_json::to_value(RunConfig::default()).expect("serializable");
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            let file: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("cannot parse config {}: {e}", path.display())))?;
            merge(&mut tree, file);
        }
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let config: RunConfig =
            serde_json::from_value(tree).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        config.model.validate()?;
        config.train.validate()?;
        Ok(config)
    }
}
