use std::ops::Range;

use super::{EmbeddingTable, LabeledInstance};
use crate::autograd::Tensor;

/// Token embeddings with the aspect collapsed to one row.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedInstance {
    /// `(n − m + 1) × dim`.
    pub features: Tensor,
    pub aspect_index: usize,
    /// Source token range of every row; only the aspect row spans more than one.
    pub row_tokens: Vec<Range<usize>>,
}

impl EncodedInstance {
    pub fn rows(&self) -> usize {
        self.features.rows()
    }

    /// Row holding token `t`.
    pub fn row_of_token(&self, t: usize) -> usize {
        self.row_tokens
            .iter()
            .position(|r| r.contains(&t))
            .expect("token index inside the sentence")
    }
}

/// Looks up every token; the aspect row is the sum of its tokens' vectors.
pub fn encode_instance(inst: &LabeledInstance, table: &EmbeddingTable) -> EncodedInstance {
    let dim = table.dim();
    let span = inst.aspect_span.clone();
    let mut row_tokens = Vec::with_capacity(inst.tokens.len() + 1 - span.len());
    row_tokens.extend((0..span.start).map(|t| t..t + 1));
    row_tokens.push(span.clone());
    row_tokens.extend((span.end..inst.tokens.len()).map(|t| t..t + 1));

    let mut data = Vec::with_capacity(row_tokens.len() * dim);
    for r in &row_tokens {
        let mut row = vec![0.0; dim];
        for t in r.clone() {
            for (acc, v) in row.iter_mut().zip(table.lookup(&inst.tokens[t]).iter()) {
                *acc += v;
            }
        }
        data.extend(row);
    }
    EncodedInstance {
        features: Tensor::matrix(row_tokens.len(), dim, data),
        aspect_index: span.start,
        row_tokens,
    }
}
