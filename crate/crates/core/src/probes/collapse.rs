use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, Cogformer, ForwardOptions};
use crate::numerics::Scalar;

const ONE: usize = b'1' as usize;
const ZERO: usize = b'0' as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProbeTask {
    /// `n+1` ones versus a zero followed by `n` ones.
    FindingZero,
    /// `n` ones versus `n+1` ones. This construction is a reconstruction;
    /// reports carry `reconstruction: true`.
    CountingOnes,
}

impl ProbeTask {
    pub fn is_reconstruction(self) -> bool {
        matches!(self, ProbeTask::CountingOnes)
    }
}

/// Which final-position vector the probe compares.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// After the final RMSNorm, the input to the unembedding.
    #[default]
    PostFinalNorm,
    /// Residual stream before the final RMSNorm.
    PreFinalNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub n: usize,
    pub linf_norm: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub task: ProbeTask,
    pub entries: Vec<ProbeEntry>,
    pub model_tag: String,
    pub reference_n: usize,
    pub representation: Representation,
    pub reconstruction: bool,
}

impl ProbeReport {
    pub fn normalized_at(&self, n: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.n == n).map(|e| e.normalized)
    }
}

/// Byte-token sequence pair for `task` at size `n`. The longer sequence
/// has `n + 1` tokens and must fit `context_len`.
pub fn build_task_pair(task: ProbeTask, n: usize, context_len: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::Config("probe size n must be at least 1".into()));
    }
    if n + 1 > context_len {
        return Err(Error::ContextOverflow {
            len: n + 1,
            context: context_len,
        });
    }
    Ok(match task {
        ProbeTask::FindingZero => {
            let a = vec![ONE; n + 1];
            let mut b = vec![ONE; n + 1];
            b[0] = ZERO;
            (a, b)
        }
        ProbeTask::CountingOnes => (vec![ONE; n], vec![ONE; n + 1]),
    })
}

/// Final-position representation of `tokens`, in f64.
pub fn final_representation<T: Scalar>(model: &Cogformer<T>, tokens: &[usize], repr: Representation) -> Result<Vec<f64>> {
    let opts = ForwardOptions {
        capture_hidden: repr == Representation::PreFinalNorm,
        ..ForwardOptions::default()
    };
    let out = forward(model, tokens, opts)?;
    let last = tokens.len() - 1;
    let row = match repr {
        Representation::PostFinalNorm => out.final_hidden.row(last).to_vec(),
        Representation::PreFinalNorm => {
            let hs = out.hidden_states.expect("captured");
            hs.last().expect("at least the embedding").row(last).to_vec()
        }
    };
    Ok(row.into_iter().map(Scalar::as_f64).collect())
}

pub fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn collapse_probe<T: Scalar>(model: &Cogformer<T>, task: ProbeTask, n_list: &[usize], reference_n: usize) -> Result<ProbeReport> {
    collapse_probe_with(model, task, n_list, reference_n, Representation::default())
}

/// L∞ distance between the final-position representations of each task
/// pair, normalized by the distance at `reference_n`.
pub fn collapse_probe_with<T: Scalar>(
    model: &Cogformer<T>,
    task: ProbeTask,
    n_list: &[usize],
    reference_n: usize,
    repr: Representation,
) -> Result<ProbeReport> {
    if !n_list.contains(&reference_n) {
        return Err(Error::Config(format!("reference n {reference_n} is not in the n list {n_list:?}")));
    }
    let ctx = model.config.context_len;
    let mut raw = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let (a, b) = build_task_pair(task, n, ctx)?;
        let ra = final_representation(model, &a, repr)?;
        let rb = final_representation(model, &b, repr)?;
        let d = linf_distance(&ra, &rb);
        if !d.is_finite() {
            return Err(Error::NonFinite {
                name: format!("probe representation at n={n}"),
            });
        }
        raw.push((n, d));
    }
    let reference = raw.iter().find(|(n, _)| *n == reference_n).map(|(_, d)| *d).expect("checked");
    if reference == 0.0 {
        return Err(Error::DegenerateReference { n: reference_n });
    }
    let entries = raw
        .into_iter()
        .map(|(n, d)| ProbeEntry {
            n,
            linf_norm: d,
            normalized: if n == reference_n { 1.0 } else { d / reference },
        })
        .collect();
    Ok(ProbeReport {
        task,
        entries,
        model_tag: model.config.activation_policy.tag().to_string(),
        reference_n,
        representation: repr,
        reconstruction: task.is_reconstruction(),
    })
}
