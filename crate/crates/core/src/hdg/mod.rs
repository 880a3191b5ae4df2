//! The two typed dependency graphs built for every instance.
//!
//! A [`HeteroGraph`] stores one symmetric adjacency matrix over all of its
//! nodes; nodes are ordered by type so that each `(source type,
//! destination type)` block is a contiguous sub-matrix.

mod build;
mod normalize;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;

pub use build::{build_hdg_et, build_hdg_ws, init_node_features};
pub use normalize::{normalize_adjacency, NormalizedAdjacency};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeType {
    Word,
    Sentiment,
    Entity,
    Sentence,
}

impl NodeType {
    pub const ALL: [NodeType; 4] = [NodeType::Word, NodeType::Sentiment, NodeType::Entity, NodeType::Sentence];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Word => "word",
            NodeType::Sentiment => "sentiment",
            NodeType::Entity => "entity",
            NodeType::Sentence => "sentence",
        }
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    /// Context words and sentiment nodes.
    Ws,
    /// Knowledge entities and one sentence node.
    Et,
}

impl GraphKind {
    pub fn node_types(self) -> [NodeType; 2] {
        match self {
            GraphKind::Ws => [NodeType::Word, NodeType::Sentiment],
            GraphKind::Et => [NodeType::Entity, NodeType::Sentence],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    #[serde(rename = "type")]
    pub kind: NodeType,
    pub surface: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    kind: GraphKind,
    nodes: Vec<Node>,
    adjacency: Tensor,
    features: Option<Tensor>,
    readout: usize,
}

impl HeteroGraph {
    pub(crate) fn new(kind: GraphKind, nodes: Vec<Node>, adjacency: Tensor, readout: usize) -> Self {
        debug_assert!(nodes.windows(2).all(|w| w[0].kind <= w[1].kind));
        debug_assert_eq!(adjacency.dims(), (nodes.len(), nodes.len()));
        HeteroGraph {
            kind,
            nodes,
            adjacency,
            features: None,
            readout,
        }
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_types(&self) -> Vec<NodeType> {
        self.nodes.iter().map(|n| n.kind).collect()
    }

    pub fn count_of(&self, t: NodeType) -> usize {
        self.nodes.iter().filter(|n| n.kind == t).count()
    }

    /// Node types with at least one node, in canonical order.
    pub fn types_present(&self) -> Vec<NodeType> {
        let mut v: Vec<NodeType> = self.nodes.iter().map(|n| n.kind).collect();
        v.dedup();
        v
    }

    /// Index of the node read out as the graph's representation: the aspect
    /// word node in a ws graph, the sentence node in an et graph.
    pub fn readout(&self) -> usize {
        self.readout
    }

    /// An et graph with no entities.
    pub fn is_degenerate(&self) -> bool {
        self.kind == GraphKind::Et && self.count_of(NodeType::Entity) == 0
    }

    /// Full symmetric `N × N` adjacency over all nodes.
    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    pub fn edge_count(&self) -> usize {
        let n = self.node_count();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.adjacency.get(i, j) != 0.0)
            .count()
    }

    /// Undirected edges `(i, j, weight)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.node_count();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let w = self.adjacency.get(i, j);
                if w != 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    fn indices_of(&self, t: NodeType) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == t)
            .map(|(i, _)| i)
            .collect()
    }

    /// Block `[|dst| × |src|]` of the adjacency.
    pub fn block(&self, src: NodeType, dst: NodeType) -> Tensor {
        sub_block(&self.adjacency, &self.indices_of(dst), &self.indices_of(src))
    }

    /// Every non-empty type-pair block.
    pub fn blocks(&self) -> BTreeMap<(NodeType, NodeType), Tensor> {
        typed_blocks(&self.adjacency, &self.node_types())
    }

    pub fn features(&self) -> Option<&Tensor> {
        self.features.as_ref()
    }

    pub(crate) fn set_features(&mut self, f: Tensor) {
        debug_assert_eq!(f.rows(), self.node_count());
        self.features = Some(f);
    }

    /// Feature rows grouped by node type.
    pub fn features_by_type(&self) -> BTreeMap<NodeType, Tensor> {
        let Some(f) = &self.features else {
            return BTreeMap::new();
        };
        self.types_present()
            .into_iter()
            .map(|t| {
                let idx = self.indices_of(t);
                let data = idx.iter().flat_map(|&i| f.row_slice(i).iter().copied()).collect();
                (t, Tensor::matrix(idx.len(), f.cols(), data))
            })
            .collect()
    }

    pub fn to_json(&self, with_features: bool) -> GraphJson {
        GraphJson {
            kind: self.kind,
            readout: self.readout,
            nodes: self.nodes.clone(),
            edges: self
                .edges()
                .into_iter()
                .map(|(i, j, weight)| EdgeJson {
                    source: i,
                    target: j,
                    relation: format!("{}-{}", self.nodes[i].kind, self.nodes[j].kind),
                    weight,
                })
                .collect(),
            features: if with_features {
                self.features
                    .as_ref()
                    .map(|f| (0..f.rows()).map(|i| f.row_slice(i).to_vec()).collect())
            } else {
                None
            },
        }
    }
}

pub(crate) fn sub_block(m: &Tensor, rows: &[usize], cols: &[usize]) -> Tensor {
    let data = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| m.get(i, j)))
        .collect();
    Tensor::matrix(rows.len(), cols.len(), data)
}

pub(crate) fn typed_blocks(m: &Tensor, types: &[NodeType]) -> BTreeMap<(NodeType, NodeType), Tensor> {
    let mut present: Vec<NodeType> = types.to_vec();
    present.sort();
    present.dedup();
    let idx = |t: NodeType| -> Vec<usize> { (0..types.len()).filter(|&i| types[i] == t).collect() };
    let mut out = BTreeMap::new();
    for &s in &present {
        for &d in &present {
            out.insert((s, d), sub_block(m, &idx(d), &idx(s)));
        }
    }
    out
}

/// Inspection/golden-file form of a graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub kind: GraphKind,
    pub readout: usize,
    pub nodes: Vec<Node>,
    pub edges: Vec<EdgeJson>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub features: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeJson {
    pub source: usize,
    pub target: usize,
    pub relation: String,
    pub weight: f64,
}
