use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KgError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KgKind {
    Conceptnet,
    Senticnet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KgTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub weight: f64,
}

/// One hop away from a query concept.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Neighbor {
    pub relation: String,
    pub entity: String,
    pub weight: f64,
}

impl PartialEq for Neighbor {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.entity
            .cmp(&other.entity)
            .then_with(|| self.relation.cmp(&other.relation))
            .then_with(|| self.weight.total_cmp(&other.weight))
    }
}

/// Immutable weighted triple store indexed by head and by tail.
#[derive(Clone, Debug)]
pub struct KgSnapshot {
    kind: KgKind,
    triples: Vec<KgTriple>,
    by_head: BTreeMap<String, Vec<usize>>,
    by_tail: BTreeMap<String, Vec<usize>>,
}

impl KgSnapshot {
    /// Builds a snapshot; duplicate `(head, relation, tail)` keys keep the
    /// largest weight.
    pub fn from_triples(kind: KgKind, triples: impl IntoIterator<Item = KgTriple>) -> Self {
        let mut dedup: BTreeMap<(String, String, String), f64> = BTreeMap::new();
        for t in triples {
            let w = dedup.entry((t.head, t.relation, t.tail)).or_insert(t.weight);
            *w = w.max(t.weight);
        }
        let triples: Vec<KgTriple> = dedup
            .into_iter()
            .map(|((head, relation, tail), weight)| KgTriple {
                head,
                relation,
                tail,
                weight,
            })
            .collect();
        let mut by_head: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_tail: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, t) in triples.iter().enumerate() {
            by_head.entry(t.head.clone()).or_default().push(i);
            by_tail.entry(t.tail.clone()).or_default().push(i);
        }
        KgSnapshot {
            kind,
            triples,
            by_head,
            by_tail,
        }
    }

    pub fn empty(kind: KgKind) -> Self {
        Self::from_triples(kind, [])
    }

    pub fn kind(&self) -> KgKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[KgTriple] {
        &self.triples
    }

    pub fn with_head(&self, head: &str) -> impl Iterator<Item = &KgTriple> {
        self.by_head
            .get(head)
            .into_iter()
            .flatten()
            .map(|&i| &self.triples[i])
    }

    pub fn with_tail(&self, tail: &str) -> impl Iterator<Item = &KgTriple> {
        self.by_tail
            .get(tail)
            .into_iter()
            .flatten()
            .map(|&i| &self.triples[i])
    }

    /// Tails of triples rooted at `concept` plus heads of triples ending there.
    pub fn neighbors(&self, concept: &str) -> BTreeSet<Neighbor> {
        let out = self.with_head(concept).map(|t| Neighbor {
            relation: t.relation.clone(),
            entity: t.tail.clone(),
            weight: t.weight,
        });
        let inc = self.with_tail(concept).map(|t| Neighbor {
            relation: t.relation.clone(),
            entity: t.head.clone(),
            weight: t.weight,
        });
        out.chain(inc).collect()
    }

    /// Largest weight of any triple joining `a` and `b` in either direction.
    pub fn link_weight(&self, a: &str, b: &str) -> Option<f64> {
        self.with_head(a)
            .filter(|t| t.tail == b)
            .chain(self.with_head(b).filter(|t| t.tail == a))
            .map(|t| t.weight)
            .reduce(f64::max)
    }

    fn require(&self, expected: KgKind) -> Result<(), KgError> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(KgError::WrongKind {
                expected,
                actual: self.kind,
            })
        }
    }
}

pub fn load_kg_snapshot(path: &Path, kind: KgKind) -> Result<KgSnapshot, KgError> {
    let text = fs::read_to_string(path).map_err(|source| KgError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_kg_snapshot(&text, kind)
}

/// `head<TAB>relation<TAB>tail<TAB>weight` lines. Concepts are lowercased;
/// blank lines and `#` comments are ignored.
pub fn parse_kg_snapshot(text: &str, kind: KgKind) -> Result<KgSnapshot, KgError> {
    let mut triples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| KgError::Parse { line: i + 1, message };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(err(format!("expected 4 tab-separated columns, found {}", cols.len())));
        }
        let head = cols[0].trim().to_lowercase();
        let tail = cols[2].trim().to_lowercase();
        if head.is_empty() || tail.is_empty() {
            return Err(err("empty head or tail".into()));
        }
        let weight: f64 = cols[3]
            .trim()
            .parse()
            .map_err(|_| err(format!("non-numeric weight {:?}", cols[3])))?;
        if !weight.is_finite() || weight < 0.0 {
            return Err(err(format!("weight {weight} must be finite and non-negative")));
        }
        triples.push(KgTriple {
            head,
            relation: cols[1].trim().to_string(),
            tail,
            weight,
        });
    }
    Ok(KgSnapshot::from_triples(kind, triples))
}

/// Entities one hop from the aspect concept in a ConceptNet-style snapshot.
/// The query is matched case-insensitively.
pub fn retrieve_aspect_neighbors(snapshot: &KgSnapshot, aspect: &str) -> Result<BTreeSet<Neighbor>, KgError> {
    snapshot.require(KgKind::Conceptnet)?;
    Ok(snapshot.neighbors(&aspect.trim().to_lowercase()))
}

/// Entities one hop from a sentiment word in a SenticNet-style snapshot.
pub fn retrieve_sentiment_entities(snapshot: &KgSnapshot, word: &str) -> Result<BTreeSet<Neighbor>, KgError> {
    snapshot.require(KgKind::Senticnet)?;
    Ok(snapshot.neighbors(&word.trim().to_lowercase()))
}
