use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::lexicon::{detect_sentiment_words, PolarityLexicon};
use super::snapshot::{retrieve_aspect_neighbors, retrieve_sentiment_entities, KgSnapshot, Neighbor};
use super::KgError;
use crate::corpus::{EncodedInstance, LabeledInstance};

/// Per-row knowledge weights plus the entities that seed the entity graph.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EnhancementWeights {
    pub alpha_cn: Vec<f64>,
    pub alpha_sn: Vec<f64>,
    pub matched_entities: BTreeSet<String>,
}

impl EnhancementWeights {
    pub fn zeros(rows: usize) -> Self {
        EnhancementWeights {
            alpha_cn: vec![0.0; rows],
            alpha_sn: vec![0.0; rows],
            matched_entities: BTreeSet::new(),
        }
    }
}

/// Which knowledge graphs contribute to enhancement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeSwitches {
    pub conceptnet: bool,
    pub senticnet: bool,
}

impl Default for KnowledgeSwitches {
    fn default() -> Self {
        KnowledgeSwitches {
            conceptnet: true,
            senticnet: true,
        }
    }
}

/// Token-level match weights. A token relates to an entity when it equals
/// the entity (the neighbor's own weight completes the match) or when a
/// snapshot triple joins the two (that triple's weight). Multi-word
/// entities only match an identical contiguous token run.
fn token_alphas<'a>(
    tokens: &[String],
    neighbors: impl IntoIterator<Item = &'a Neighbor>,
    snapshot: &KgSnapshot,
) -> (Vec<f64>, BTreeSet<String>) {
    let mut alpha = vec![0.0_f64; tokens.len()];
    let mut matched = BTreeSet::new();
    for n in neighbors {
        let words: Vec<&str> = n.entity.split_whitespace().collect();
        if words.len() == 1 {
            for (t, tok) in tokens.iter().enumerate() {
                let direct = (tok == &n.entity).then_some(n.weight);
                let linked = snapshot.link_weight(tok, &n.entity);
                if let Some(w) = direct.into_iter().chain(linked).reduce(f64::max) {
                    alpha[t] = alpha[t].max(w);
                    matched.insert(n.entity.clone());
                }
            }
        } else if words.len() <= tokens.len() {
            for start in 0..=tokens.len() - words.len() {
                let run = &tokens[start..start + words.len()];
                if run.iter().zip(&words).all(|(a, b)| a == b) {
                    for a in &mut alpha[start..start + words.len()] {
                        *a = a.max(n.weight);
                    }
                    matched.insert(n.entity.clone());
                }
            }
        }
    }
    (alpha, matched)
}

fn pool_rows(enc: &EncodedInstance, token_alpha: &[f64]) -> Vec<f64> {
    enc.row_tokens
        .iter()
        .map(|r| token_alpha[r.clone()].iter().copied().fold(0.0, f64::max))
        .collect()
}

/// `α^CN` per encoded row (max over matches, 0 when none) and the entity set
/// for the entity graph: every neighbor of the aspect plus every entity a
/// token matched.
pub fn match_context_conceptnet(
    inst: &LabeledInstance,
    enc: &EncodedInstance,
    neighbors: &BTreeSet<Neighbor>,
    snapshot: &KgSnapshot,
) -> (Vec<f64>, BTreeSet<String>) {
    let (tok, mut matched) = token_alphas(&inst.tokens, neighbors, snapshot);
    matched.extend(neighbors.iter().map(|n| n.entity.clone()));
    (pool_rows(enc, &tok), matched)
}

/// `α^SN` per encoded row: the same rule as ConceptNet matching, maximized
/// over the entity sets of every detected sentiment word.
pub fn match_context_senticnet(
    inst: &LabeledInstance,
    enc: &EncodedInstance,
    entity_sets: &[BTreeSet<Neighbor>],
    snapshot: &KgSnapshot,
) -> Vec<f64> {
    let (tok, _) = token_alphas(&inst.tokens, entity_sets.iter().flatten(), snapshot);
    pool_rows(enc, &tok)
}

/// Aspect neighbors: the whole aspect phrase first, else the union over its
/// individual tokens.
fn aspect_neighbors(inst: &LabeledInstance, cn: &KgSnapshot) -> Result<BTreeSet<Neighbor>, KgError> {
    let phrase = retrieve_aspect_neighbors(cn, &inst.aspect_text())?;
    if !phrase.is_empty() || inst.aspect_len() == 1 {
        return Ok(phrase);
    }
    let mut all = BTreeSet::new();
    for t in &inst.tokens[inst.aspect_span.clone()] {
        all.extend(retrieve_aspect_neighbors(cn, t)?);
    }
    Ok(all)
}

/// Runs both retrieval and matching passes for one instance.
pub fn enhancement_weights(
    inst: &LabeledInstance,
    enc: &EncodedInstance,
    conceptnet: &KgSnapshot,
    senticnet: &KgSnapshot,
    lexicon: &PolarityLexicon,
    switches: KnowledgeSwitches,
) -> Result<EnhancementWeights, KgError> {
    let mut w = EnhancementWeights::zeros(enc.rows());
    if switches.conceptnet {
        let neighbors = aspect_neighbors(inst, conceptnet)?;
        let (alpha, matched) = match_context_conceptnet(inst, enc, &neighbors, conceptnet);
        w.alpha_cn = alpha;
        w.matched_entities = matched;
    }
    if switches.senticnet {
        let sets = detect_sentiment_words(inst, lexicon)
            .iter()
            .map(|h| retrieve_sentiment_entities(senticnet, &inst.tokens[h.token_index]))
            .collect::<Result<Vec<_>, _>>()?;
        w.alpha_sn = match_context_senticnet(inst, enc, &sets, senticnet);
    }
    Ok(w)
}

/// Scales row `i` by `1 + α^CN_i + α^SN_i`.
pub fn apply_enhancement(enc: &EncodedInstance, w: &EnhancementWeights) -> Result<EncodedInstance, KgError> {
    let rows = enc.rows();
    for len in [w.alpha_cn.len(), w.alpha_sn.len()] {
        if len != rows {
            return Err(KgError::Length { weights: len, rows });
        }
    }
    let mut out = enc.clone();
    for i in 0..rows {
        let factor = 1.0 + w.alpha_cn[i] + w.alpha_sn[i];
        for v in out.features.row_slice_mut(i) {
            *v *= factor;
        }
    }
    Ok(out)
}
