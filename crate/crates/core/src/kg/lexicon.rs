use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::KgError;
use crate::corpus::{LabeledInstance, Polarity};

/// Positive and negative evaluative words. A word never sits in both sets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolarityLexicon {
    positive: BTreeSet<String>,
    negative: BTreeSet<String>,
}

impl PolarityLexicon {
    /// Words appearing in both inputs are ambiguous and dropped from both.
    pub fn new<I, J, S, T>(positive: I, negative: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let mut pos: BTreeSet<String> = positive.into_iter().map(|w| w.as_ref().to_lowercase()).collect();
        let mut neg: BTreeSet<String> = negative.into_iter().map(|w| w.as_ref().to_lowercase()).collect();
        let both: Vec<String> = pos.intersection(&neg).cloned().collect();
        for w in &both {
            pos.remove(w);
            neg.remove(w);
        }
        PolarityLexicon {
            positive: pos,
            negative: neg,
        }
    }

    pub fn polarity(&self, word: &str) -> Option<Polarity> {
        if self.positive.contains(word) {
            Some(Polarity::Positive)
        } else if self.negative.contains(word) {
            Some(Polarity::Negative)
        } else {
            None
        }
    }

    pub fn positive(&self) -> &BTreeSet<String> {
        &self.positive
    }

    pub fn negative(&self) -> &BTreeSet<String> {
        &self.negative
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn load_lexicon(path: &Path) -> Result<PolarityLexicon, KgError> {
    let text = fs::read_to_string(path).map_err(|source| KgError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_lexicon(&text)
}

/// `word<TAB>POSITIV|NEGATIV`. Sense suffixes such as `LOVE#1` are folded
/// into the bare word.
pub fn parse_lexicon(text: &str) -> Result<PolarityLexicon, KgError> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (word, cat) = line.split_once('\t').ok_or_else(|| KgError::Parse {
            line: i + 1,
            message: "expected word<TAB>category".into(),
        })?;
        let word = word.split('#').next().unwrap_or(word).trim().to_lowercase();
        match cat.trim() {
            "POSITIV" => pos.push(word),
            "NEGATIV" => neg.push(word),
            other => {
                return Err(KgError::Parse {
                    line: i + 1,
                    message: format!("unknown category {other:?}"),
                })
            }
        }
    }
    Ok(PolarityLexicon::new(pos, neg))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SentimentHit {
    pub token_index: usize,
    pub polarity: Polarity,
}

/// Every token found in the lexicon, in token order. Aspect tokens count too.
pub fn detect_sentiment_words(inst: &LabeledInstance, lex: &PolarityLexicon) -> Vec<SentimentHit> {
    inst.tokens
        .iter()
        .enumerate()
        .filter_map(|(i, t)| {
            lex.polarity(&t.to_lowercase()).map(|polarity| SentimentHit {
                token_index: i,
                polarity,
            })
        })
        .collect()
}
