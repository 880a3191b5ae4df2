//! Local knowledge-graph snapshots, the polarity lexicon, and per-row
//! enhancement weights derived from them.

mod lexicon;
mod matching;
mod snapshot;

use std::path::PathBuf;

use thiserror::Error;

pub use lexicon::{detect_sentiment_words, load_lexicon, parse_lexicon, PolarityLexicon, SentimentHit};
pub use matching::{
    apply_enhancement, enhancement_weights, match_context_conceptnet, match_context_senticnet, EnhancementWeights,
    KnowledgeSwitches,
};
pub use snapshot::{
    load_kg_snapshot, parse_kg_snapshot, retrieve_aspect_neighbors, retrieve_sentiment_entities, KgKind, KgSnapshot,
    KgTriple, Neighbor,
};

#[derive(Debug, Error)]
pub enum KgError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("expected a {expected:?} snapshot, got {actual:?}")]
    WrongKind { expected: KgKind, actual: KgKind },
    #[error("enhancement weights have {weights} rows, instance has {rows}")]
    Length { weights: usize, rows: usize },
}
