use std::collections::BTreeSet;

use super::{GraphKind, HeteroGraph, Node, NodeType};
use crate::autograd::Tensor;
use crate::corpus::{EmbeddingTable, EncodedInstance, LabeledInstance};
use crate::kg::{KgSnapshot, SentimentHit};

fn connect(adj: &mut Tensor, i: usize, j: usize, w: f64) {
    adj.set(i, j, w);
    adj.set(j, i, w);
}

/// Context-sentiment graph.
///
/// Word nodes mirror the encoded rows (the pooled aspect is one node).
/// Dependency arcs become unit word–word edges after remapping token
/// indices to rows; arcs inside the aspect span vanish and duplicates
/// collapse. Each sentiment hit adds a sentiment node joined to the word
/// node of the token it tags.
pub fn build_hdg_ws(inst: &LabeledInstance, enc: &EncodedInstance, hits: &[SentimentHit]) -> HeteroGraph {
    let words = enc.rows();
    let n = words + hits.len();
    let mut nodes = Vec::with_capacity(n);
    for (row, range) in enc.row_tokens.iter().enumerate() {
        nodes.push(Node {
            id: row,
            kind: NodeType::Word,
            surface: inst.tokens[range.clone()].join(" "),
        });
    }
    let mut adj = Tensor::zeros(&[n, n]);
    for e in &inst.parse_edges {
        let (a, b) = (enc.row_of_token(e.head), enc.row_of_token(e.dependent));
        if a != b {
            connect(&mut adj, a, b, 1.0);
        }
    }
    for (k, hit) in hits.iter().enumerate() {
        let id = words + k;
        nodes.push(Node {
            id,
            kind: NodeType::Sentiment,
            surface: inst.tokens[hit.token_index].clone(),
        });
        connect(&mut adj, id, enc.row_of_token(hit.token_index), 1.0);
    }
    HeteroGraph::new(GraphKind::Ws, nodes, adj, enc.aspect_index)
}

/// Entity-text graph: one node per entity (lexicographic), then the
/// sentence node. Entities joined by any snapshot triple share an edge
/// weighted by the heaviest such triple; every entity links to the
/// sentence with weight 1.
pub fn build_hdg_et(entities: &BTreeSet<String>, snapshot: &KgSnapshot) -> HeteroGraph {
    let ents: Vec<&String> = entities.iter().collect();
    let n = ents.len() + 1;
    let sentence = n - 1;
    let mut adj = Tensor::zeros(&[n, n]);
    for i in 0..ents.len() {
        for j in i + 1..ents.len() {
            if let Some(w) = snapshot.link_weight(ents[i], ents[j]) {
                connect(&mut adj, i, j, w);
            }
        }
        connect(&mut adj, i, sentence, 1.0);
    }
    let mut nodes: Vec<Node> = ents
        .iter()
        .enumerate()
        .map(|(i, e)| Node {
            id: i,
            kind: NodeType::Entity,
            surface: (*e).clone(),
        })
        .collect();
    nodes.push(Node {
        id: sentence,
        kind: NodeType::Sentence,
        surface: String::new(),
    });
    HeteroGraph::new(GraphKind::Et, nodes, adj, sentence)
}

fn mean_rows<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut count = 0usize;
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
        count += 1;
    }
    if count > 0 {
        for a in &mut acc {
            *a /= count as f64;
        }
    }
    acc
}

/// Initial node features. Word nodes copy the enhanced rows, sentiment
/// nodes embed their word, entity nodes average their words' embeddings,
/// and the sentence node averages all enhanced rows.
pub fn init_node_features(mut g: HeteroGraph, table: &EmbeddingTable, enhanced: &EncodedInstance) -> HeteroGraph {
    let dim = enhanced.features.cols();
    assert_eq!(dim, table.dim(), "embedding and encoded dimensions differ");
    let mut data = Vec::with_capacity(g.node_count() * dim);
    for node in g.nodes() {
        let row: Vec<f64> = match node.kind {
            NodeType::Word => enhanced.features.row_slice(node.id).to_vec(),
            NodeType::Sentiment => table.lookup(&node.surface).into_owned(),
            NodeType::Entity => {
                let vecs: Vec<Vec<f64>> = node
                    .surface
                    .split_whitespace()
                    .map(|w| table.lookup(w).into_owned())
                    .collect();
                mean_rows(vecs.iter().map(Vec::as_slice), dim)
            }
            NodeType::Sentence => mean_rows(
                (0..enhanced.features.rows()).map(|i| enhanced.features.row_slice(i)),
                dim,
            ),
        };
        data.extend(row);
    }
    let rows = g.node_count();
    g.set_features(Tensor::matrix(rows, dim, data));
    g
}
