use std::collections::BTreeMap;

use super::{typed_blocks, HeteroGraph, NodeType};
use crate::autograd::Tensor;

/// `D^{-1/2} (A + I) D^{-1/2}` over the stacked multi-type adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: Tensor,
    node_types: Vec<NodeType>,
}

impl NormalizedAdjacency {
    /// Stacked `N × N` matrix in the graph's node order.
    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.node_types
    }

    pub fn blocks(&self) -> BTreeMap<(NodeType, NodeType), Tensor> {
        typed_blocks(&self.matrix, &self.node_types)
    }

    /// 1 where `A + I` is non-zero, i.e. the neighborhood including the node itself.
    pub fn neighbor_mask(&self) -> Tensor {
        self.matrix.map(|x| if x != 0.0 { 1.0 } else { 0.0 })
    }
}

pub fn normalize_adjacency(g: &HeteroGraph) -> NormalizedAdjacency {
    NormalizedAdjacency::from_dense(g.adjacency(), g.node_types())
}

impl NormalizedAdjacency {
    /// Normalizes a raw symmetric adjacency whose rows are typed by `node_types`.
    pub fn from_dense(a: &Tensor, node_types: Vec<NodeType>) -> Self {
        let n = node_types.len();
        assert_eq!(a.dims(), (n, n), "adjacency must be square over the typed nodes");
        let deg: Vec<f64> = (0..n).map(|i| 1.0 + a.row_slice(i).iter().sum::<f64>()).collect();
        let mut m = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in 0..n {
                let aij = a.get(i, j) + if i == j { 1.0 } else { 0.0 };
                if aij != 0.0 {
                    m.set(i, j, aij / (deg[i] * deg[j]).sqrt());
                }
            }
        }
        NormalizedAdjacency { matrix: m, node_types }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdg::{GraphKind, Node};

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> HeteroGraph {
        let mut adj = Tensor::zeros(&[n, n]);
        for &(i, j, w) in edges {
            adj.set(i, j, w);
            adj.set(j, i, w);
        }
        let nodes = (0..n)
            .map(|id| Node {
                id,
                kind: NodeType::Word,
                surface: String::new(),
            })
            .collect();
        HeteroGraph::new(GraphKind::Ws, nodes, adj, 0)
    }

    #[test]
    fn single_node_self_loop() {
        let norm = normalize_adjacency(&graph(1, &[]));
        assert_eq!(norm.matrix().data(), &[1.0]);
    }

    #[test]
    fn two_nodes_one_edge() {
        let norm = normalize_adjacency(&graph(2, &[(0, 1, 1.0)]));
        for &v in norm.matrix().data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn diagonal_is_inverse_degree() {
        let norm = normalize_adjacency(&graph(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]));
        let m = norm.matrix();
        assert!((m.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((m.get(1, 1) - 0.5).abs() < 1e-15);
        assert!((m.get(0, 1) - m.get(1, 0)).abs() < 1e-15);
        assert_eq!(m.get(1, 2), 0.0);
    }
}
