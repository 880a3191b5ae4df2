//! Datasets, dependency parses and word vectors.

mod conllu;
mod dataset;
mod embeddings;
mod encode;

use std::fmt;
use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conllu::{attach_parses, load_conllu, parse_conllu};
pub use dataset::{load_dataset, parse_jsonl, parse_semeval_xml, DatasetFormat};
pub use embeddings::{load_embeddings, parse_embeddings, EmbeddingTable, OovPolicy};
pub use encode::{encode_instance, EncodedInstance};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("record {record} (line {line}): field `{field}`: {message}")]
    Record {
        line: usize,
        record: usize,
        field: &'static str,
        message: String,
    },
    #[error("record {record}: aspect span [{from}, {to}) outside sentence of {tokens} tokens")]
    Span {
        record: usize,
        from: usize,
        to: usize,
        tokens: usize,
    },
    #[error("sentence {sentence}: aspect characters [{from}, {to}) cover no token")]
    CharSpan {
        sentence: String,
        from: usize,
        to: usize,
    },
    #[error("xml: {0}")]
    Xml(String),
    #[error("line {line}: {message}")]
    Conllu { line: usize, message: String },
    #[error("record {record}: parse edge ({head}, {dependent}) invalid for {tokens} tokens")]
    Edge {
        record: usize,
        head: usize,
        dependent: usize,
        tokens: usize,
    },
    #[error("line {line}: expected {expected} vector components, found {found}")]
    EmbeddingArity {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: bad vector component {token:?}")]
    EmbeddingValue { line: usize, token: String },
    #[error("embedding dimension must be positive")]
    ZeroDim,
}

/// Gold polarity. The discriminant is the class index used by the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive = 0,
    Neutral = 1,
    Negative = 2,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Neutral, Polarity::Negative];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Some(Polarity::Positive),
            "neutral" => Some(Polarity::Neutral),
            "negative" => Some(Polarity::Negative),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Neutral => "neutral",
            Polarity::Negative => "negative",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One head → dependent arc, 0-based token indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParseEdge {
    pub head: usize,
    pub dependent: usize,
    pub relation: String,
}

/// A sentence with one aspect span and its gold polarity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub text: String,
    pub tokens: Vec<String>,
    pub aspect_span: Range<usize>,
    pub label: Polarity,
    pub parse_edges: Vec<ParseEdge>,
}

impl LabeledInstance {
    /// Aspect tokens joined by single spaces.
    pub fn aspect_text(&self) -> String {
        self.tokens[self.aspect_span.clone()].join(" ")
    }

    pub fn aspect_len(&self) -> usize {
        self.aspect_span.len()
    }

    /// Checks the span and edge invariants; `record` is used in errors.
    pub fn validate(&self, record: usize) -> Result<(), CorpusError> {
        let n = self.tokens.len();
        let span = &self.aspect_span;
        if span.start >= span.end || span.end > n {
            return Err(CorpusError::Span {
                record,
                from: span.start,
                to: span.end,
                tokens: n,
            });
        }
        for e in &self.parse_edges {
            if e.head >= n || e.dependent >= n || e.head == e.dependent {
                return Err(CorpusError::Edge {
                    record,
                    head: e.head,
                    dependent: e.dependent,
                    tokens: n,
                });
            }
        }
        Ok(())
    }
}

/// Whitespace tokenization with lowercasing and trimming of surrounding
/// ASCII punctuation. A token made only of punctuation is kept as-is so
/// token indices always match whitespace positions.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_offsets(text).into_iter().map(|(t, _)| t).collect()
}

/// Like [`tokenize`], also returning each token's character range in `text`
/// (before trimming).
pub fn tokenize_with_offsets(text: &str) -> Vec<(String, Range<usize>)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut word = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &ch) in chars.iter().enumerate() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((normalize_token(&word), s..i));
                word.clear();
            }
        } else {
            start.get_or_insert(i);
            word.push(ch);
        }
    }
    if let Some(s) = start {
        out.push((normalize_token(&word), s..chars.len()));
    }
    out
}

fn normalize_token(raw: &str) -> String {
    let lower = raw.to_lowercase();
    let trimmed = lower.trim_matches(|c: char| c.is_ascii_punctuation());
    if trimmed.is_empty() {
        lower
    } else {
        trimmed.to_string()
    }
}

/// Label counts in (positive, neutral, negative) order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub positive: usize,
    pub neutral: usize,
    pub negative: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.positive + self.neutral + self.negative
    }

    pub fn as_tuple(&self) -> (usize, usize, usize) {
        (self.positive, self.neutral, self.negative)
    }
}

impl fmt::Display for LabelCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.positive, self.neutral, self.negative)
    }
}

pub fn corpus_stats(instances: &[LabeledInstance]) -> LabelCounts {
    let mut c = LabelCounts::default();
    for inst in instances {
        match inst.label {
            Polarity::Positive => c.positive += 1,
            Polarity::Neutral => c.neutral += 1,
            Polarity::Negative => c.negative += 1,
        }
    }
    c
}
