use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Byte-level tokenization: each byte is its own token id.
pub fn tokenize_bytes(text: &[u8]) -> Vec<usize> {
    text.iter().map(|&b| b as usize).collect()
}

/// Inverse of [`tokenize_bytes`]; ids above 255 are an error.
pub fn detokenize(tokens: &[usize]) -> Result<Vec<u8>> {
    tokens
        .iter()
        .map(|&t| u8::try_from(t).map_err(|_| Error::OutOfVocab { token: t, vocab: 256 }))
        .collect()
}

pub fn read_corpus(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

const SHUFFLE_STREAM_BASE: u64 = 0x6261_7463_6800_0000;

/// Deterministic sampler over non-overlapping `context_len` windows.
///
/// The batch for a step depends only on `(seed, step)`: sample `g` of the
/// run maps to epoch `g / n_windows` and to a slot in that epoch's
/// permutation, so resuming needs nothing beyond the step counter.
#[derive(Debug, Clone)]
pub struct Batcher {
    corpus: Vec<u8>,
    context_len: usize,
    batch_size: usize,
    seed: u64,
    n_windows: usize,
    epoch: Option<(u64, Vec<usize>)>,
}

impl Batcher {
    pub fn new(corpus: Vec<u8>, context_len: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if context_len < 2 {
            return Err(Error::Config("context_len must be at least 2".into()));
        }
        if corpus.len() < context_len {
            return Err(Error::Config(format!(
                "corpus has {} bytes, shorter than context_len {context_len}",
                corpus.len()
            )));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let n_windows = corpus.len() / context_len;
        Ok(Self {
            corpus,
            context_len,
            batch_size,
            seed,
            n_windows,
            epoch: None,
        })
    }

    pub fn n_windows(&self) -> usize {
        self.n_windows
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn window_index(&mut self, sample: u64) -> usize {
        let epoch = sample / self.n_windows as u64;
        let slot = (sample % self.n_windows as u64) as usize;
        if self.epoch.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let perm = Rng::new(self.seed, SHUFFLE_STREAM_BASE.wrapping_add(epoch)).permutation(self.n_windows);
            self.epoch = Some((epoch, perm));
        }
        self.epoch.as_ref().expect("just set").1[slot]
    }

    /// Token windows for optimizer step `step`.
    pub fn batch(&mut self, step: usize) -> Vec<Vec<usize>> {
        let first = step as u64 * self.batch_size as u64;
        (0..self.batch_size as u64)
            .map(|b| {
                let w = self.window_index(first + b);
                let start = w * self.context_len;
                tokenize_bytes(&self.corpus[start..start + self.context_len])
            })
            .collect()
    }
}
