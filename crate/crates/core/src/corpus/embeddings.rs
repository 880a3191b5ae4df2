use std::borrow::Cow;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::autograd::rng;

/// What [`EmbeddingTable::lookup`] returns for an unknown word.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OovPolicy {
    Zeros,
    /// Uniform in `[−scale, scale]`, drawn from a stream keyed by the word
    /// and `seed`, so the same word always gets the same vector.
    HashedUniform { seed: u64, scale: f64 },
}

impl Default for OovPolicy {
    fn default() -> Self {
        OovPolicy::HashedUniform { seed: 0, scale: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
    oov: OovPolicy,
}

impl EmbeddingTable {
    pub fn new(dim: usize, oov: OovPolicy) -> Result<Self, CorpusError> {
        if dim == 0 {
            return Err(CorpusError::ZeroDim);
        }
        Ok(EmbeddingTable {
            dim,
            entries: HashMap::new(),
            oov,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    /// Panics if `vector.len() != dim`.
    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dim, "embedding dimension");
        self.entries.insert(word.into(), vector);
    }

    pub fn lookup(&self, word: &str) -> Cow<'_, [f64]> {
        match self.entries.get(word) {
            Some(v) => Cow::Borrowed(v),
            None => Cow::Owned(self.oov_vector(word)),
        }
    }

    fn oov_vector(&self, word: &str) -> Vec<f64> {
        match self.oov {
            OovPolicy::Zeros => vec![0.0; self.dim],
            OovPolicy::HashedUniform { seed, scale } => {
                let mut r = rng::named_stream(seed, word, &[]);
                (0..self.dim)
                    .map(|_| r.random_range(-scale..=scale))
                    .collect()
            }
        }
    }
}

pub fn load_embeddings(path: &Path, dim: usize, oov: OovPolicy) -> Result<EmbeddingTable, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_embeddings(&text, dim, oov)
}

/// GloVe text format: `word v1 … vdim` per line. Later duplicates win.
pub fn parse_embeddings(text: &str, dim: usize, oov: OovPolicy) -> Result<EmbeddingTable, CorpusError> {
    let mut table = EmbeddingTable::new(dim, oov)?;
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let comps: Vec<&str> = parts.collect();
        if comps.len() != dim {
            return Err(CorpusError::EmbeddingArity {
                line: i + 1,
                expected: dim,
                found: comps.len(),
            });
        }
        let vector = comps
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CorpusError::EmbeddingValue {
                        line: i + 1,
                        token: c.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        table.insert(word, vector);
    }
    Ok(table)
}
