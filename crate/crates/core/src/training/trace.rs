use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    /// Mean next-token loss of the step's batch, in nats, before the update.
    pub loss: f64,
    pub lr: f64,
    /// Wall time of the step in milliseconds.
    pub wall_ms: f64,
}

/// Loss records with strictly increasing steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub records: Vec<LossRecord>,
}

impl LossTrace {
    pub fn push(&mut self, record: LossRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.step <= last.step {
                return Err(Error::Config(format!(
                    "loss trace steps must increase: {} after {}",
                    record.step, last.step
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    /// Mean loss over records with `step >= from_step`.
    pub fn mean_loss_since(&self, from_step: usize) -> Option<f64> {
        let tail: Vec<f64> = self.records.iter().filter(|r| r.step >= from_step).map(|r| r.loss).collect();
        (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl()?.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut trace = Self::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            trace.push(serde_json::from_str(line)?)?;
        }
        Ok(trace)
    }
}
