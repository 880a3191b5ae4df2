use std::collections::BTreeMap;

use super::ModelError;
use crate::autograd::{Tape, Tensor, Var};
use crate::hdg::{GraphKind, HeteroGraph, NodeType, NormalizedAdjacency};

/// Constant per-instance view of a graph, ready for the tape.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphInput {
    pub kind: GraphKind,
    pub node_types: Vec<NodeType>,
    /// `D^{-1/2} (A + I) D^{-1/2}`.
    pub norm: Tensor,
    /// 1 where `A + I` is non-zero.
    pub mask: Tensor,
    /// Raw (pre-projection) node features.
    pub features: Tensor,
    pub readout: usize,
}

impl GraphInput {
    pub fn new(kind: GraphKind, norm: &NormalizedAdjacency, features: Tensor, readout: usize) -> Self {
        GraphInput {
            kind,
            node_types: norm.node_types().to_vec(),
            norm: norm.matrix().clone(),
            mask: norm.neighbor_mask(),
            features,
            readout,
        }
    }

    pub fn from_graph(g: &HeteroGraph) -> Result<Self, ModelError> {
        let features = g.features().ok_or(ModelError::MissingFeatures)?.clone();
        let norm = crate::hdg::normalize_adjacency(g);
        Ok(GraphInput::new(g.kind(), &norm, features, g.readout()))
    }

    pub fn node_count(&self) -> usize {
        self.node_types.len()
    }

    pub fn count_of(&self, t: NodeType) -> usize {
        self.node_types.iter().filter(|&&x| x == t).count()
    }

    /// Types with at least one node, in canonical order.
    pub fn types_present(&self) -> Vec<NodeType> {
        let mut v = self.node_types.clone();
        v.sort();
        v.dedup();
        v
    }

    fn row_mask(&self, t: NodeType, width: usize) -> Tensor {
        let n = self.node_count();
        let data = (0..n)
            .flat_map(|i| std::iter::repeat_n(if self.node_types[i] == t { 1.0 } else { 0.0 }, width))
            .collect();
        Tensor::matrix(n, width, data)
    }

    /// Neighbor mask restricted to columns of type `t`.
    fn type_mask(&self, t: NodeType) -> Tensor {
        let mut m = self.mask.clone();
        let n = self.node_count();
        for i in 0..n {
            for j in 0..n {
                if self.node_types[j] != t {
                    m.set(i, j, 0.0);
                }
            }
        }
        m
    }
}

/// Per-type projections `W_τ` of one layer.
#[derive(Clone, Debug)]
pub struct HeteroLayerParams {
    pub layer: usize,
    pub weights: BTreeMap<NodeType, Var>,
}

/// Type-channel vectors `µ_τ` (`2d × 1`) and the node-channel vector `ν` (`2d × 1`).
#[derive(Clone, Debug)]
pub struct DualAttentionParams {
    pub layer: usize,
    pub mu: BTreeMap<NodeType, Var>,
    pub nu: Var,
    pub slope: f64,
}

/// `Σ_τ 1[type(i) = τ] · (h W_τ)_i`: each row projected by its own type's matrix.
pub fn typed_projection(tape: &mut Tape, g: &GraphInput, h: Var, params: &HeteroLayerParams) -> Result<Var, ModelError> {
    let mut acc: Option<Var> = None;
    for t in g.types_present() {
        let w = *params.weights.get(&t).ok_or(ModelError::MissingParam {
            what: "projection",
            layer: params.layer,
            node_type: t,
        })?;
        let hw = tape.matmul(h, w)?;
        let width = tape.shape(hw).1;
        let part = tape.mul_const(hw, g.row_mask(t, width))?;
        acc = Some(match acc {
            Some(a) => tape.add(a, part)?,
            None => part,
        });
    }
    acc.ok_or(ModelError::MissingFeatures)
}

/// `ReLU(Ã P)` with `P` the typed projection of `h`.
pub fn hetero_conv(tape: &mut Tape, g: &GraphInput, h: Var, params: &HeteroLayerParams) -> Result<Var, ModelError> {
    let p = typed_projection(tape, g, h, params)?;
    let norm = tape.constant(g.norm.clone());
    let agg = tape.matmul(norm, p)?;
    Ok(tape.relu(agg))
}

fn split_halves(tape: &mut Tape, v: Var, d: usize) -> Result<(Var, Var), ModelError> {
    let (r, c) = tape.shape(v);
    if (r, c) != (2 * d, 1) {
        return Err(crate::autograd::AutogradError::shape("attention vector", &[r, c], &[2 * d, 1]).into());
    }
    Ok((tape.slice(v, 0, 0, d)?, tape.slice(v, 0, d, d)?))
}

/// Type weights `α` as an `N × K` matrix over the graph's present types
/// (returned alongside, in order). Row `i` is a softmax over the types
/// that occur among node `i`'s neighbors, self included; other entries are 0.
pub fn type_channel_attention(
    tape: &mut Tape,
    g: &GraphInput,
    h: Var,
    params: &DualAttentionParams,
) -> Result<(Var, Vec<NodeType>), ModelError> {
    let types = g.types_present();
    let n = g.node_count();
    let d = tape.shape(h).1;
    let mut scores = Vec::with_capacity(types.len());
    let mut presence = Tensor::zeros(&[n, types.len()]);
    for (k, &t) in types.iter().enumerate() {
        let mu = *params.mu.get(&t).ok_or(ModelError::MissingParam {
            what: "type attention vector",
            layer: params.layer,
            node_type: t,
        })?;
        let (mu_self, mu_type) = split_halves(tape, mu, d)?;
        let tm = g.type_mask(t);
        for i in 0..n {
            if tm.row_slice(i).iter().any(|&x| x != 0.0) {
                presence.set(i, k, 1.0);
            }
        }
        let tm = tape.constant(tm);
        let h_type = tape.matmul(tm, h)?;
        let a = tape.matmul(h, mu_self)?;
        let b = tape.matmul(h_type, mu_type)?;
        let s = tape.add(a, b)?;
        scores.push(tape.leaky_relu(s, params.slope));
    }
    let s = tape.concat(&scores, 1)?;
    Ok((tape.masked_softmax(s, &presence)?, types))
}

/// Neighbor weights `β` (`N × N`): softmax over `N_i` of
/// `leaky_relu(ν · [h_i ‖ h_j]) · α_{i, type(j)}`.
pub fn node_channel_attention(
    tape: &mut Tape,
    g: &GraphInput,
    h: Var,
    alpha: Var,
    types: &[NodeType],
    params: &DualAttentionParams,
) -> Result<Var, ModelError> {
    let n = g.node_count();
    let d = tape.shape(h).1;
    let (nu_self, nu_nb) = split_halves(tape, params.nu, d)?;
    let a = tape.matmul(h, nu_self)?;
    let b = tape.matmul(h, nu_nb)?;
    let bt = tape.transpose(b);
    let e = tape.add(a, bt)?;
    let e = tape.leaky_relu(e, params.slope);
    let mut onehot_t = Tensor::zeros(&[types.len(), n]);
    for (j, t) in g.node_types.iter().enumerate() {
        if let Some(k) = types.iter().position(|x| x == t) {
            onehot_t.set(k, j, 1.0);
        }
    }
    let onehot_t = tape.constant(onehot_t);
    let gate = tape.matmul(alpha, onehot_t)?;
    let e = tape.mul(e, gate)?;
    Ok(tape.masked_softmax(e, &g.mask)?)
}

/// `ReLU(β P)`: the convolution with `Ã` replaced by the attention weights.
pub fn attention_layer(
    tape: &mut Tape,
    g: &GraphInput,
    h: Var,
    hetero: &HeteroLayerParams,
    dual: &DualAttentionParams,
) -> Result<Var, ModelError> {
    let p = typed_projection(tape, g, h, hetero)?;
    let (alpha, types) = type_channel_attention(tape, g, h, dual)?;
    let beta = node_channel_attention(tape, g, h, alpha, &types, dual)?;
    let agg = tape.matmul(beta, p)?;
    Ok(tape.relu(agg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(types: Vec<NodeType>, edges: &[(usize, usize)], d: usize) -> GraphInput {
        let n = types.len();
        let mut a = Tensor::zeros(&[n, n]);
        for &(i, j) in edges {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
        let feats = Tensor::matrix(n, d, (0..n * d).map(|k| (k as f64 * 0.37).sin()).collect());
        GraphInput::new(GraphKind::Ws, &NormalizedAdjacency::from_dense(&a, types), feats, 0)
    }

    #[test]
    fn identity_graph_conv_is_relu() {
        let g = graph(vec![NodeType::Word], &[], 2);
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::row(vec![1.0, -2.0]));
        let w = tape.constant(Tensor::identity(2));
        let p = HeteroLayerParams {
            layer: 0,
            weights: [(NodeType::Word, w)].into(),
        };
        let out = hetero_conv(&mut tape, &g, h, &p).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 0.0]);
    }

    #[test]
    fn missing_projection_is_an_error() {
        let g = graph(vec![NodeType::Word, NodeType::Sentiment], &[(0, 1)], 2);
        let mut tape = Tape::new();
        let h = tape.constant(g.features.clone());
        let w = tape.constant(Tensor::identity(2));
        let p = HeteroLayerParams {
            layer: 3,
            weights: [(NodeType::Word, w)].into(),
        };
        let err = hetero_conv(&mut tape, &g, h, &p).unwrap_err();
        assert!(matches!(
            err,
            ModelError::MissingParam {
                layer: 3,
                node_type: NodeType::Sentiment,
                ..
            }
        ));
    }

    fn dual(tape: &mut Tape, types: &[NodeType], d: usize) -> DualAttentionParams {
        let mu = types
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let v = Tensor::matrix(2 * d, 1, (0..2 * d).map(|i| ((i + k) as f64 * 0.9).cos()).collect());
                (t, tape.constant(v))
            })
            .collect();
        let nu = tape.constant(Tensor::matrix(2 * d, 1, (0..2 * d).map(|i| (i as f64 * 1.3).sin()).collect()));
        DualAttentionParams {
            layer: 1,
            mu,
            nu,
            slope: 0.2,
        }
    }

    #[test]
    fn single_type_neighborhood_gets_full_type_weight() {
        let types = vec![NodeType::Word, NodeType::Word, NodeType::Sentiment];
        let g = graph(types, &[(0, 1)], 3);
        let mut tape = Tape::new();
        let h = tape.constant(g.features.clone());
        let p = dual(&mut tape, &[NodeType::Word, NodeType::Sentiment], 3);
        let (alpha, present) = type_channel_attention(&mut tape, &g, h, &p).unwrap();
        assert_eq!(present, vec![NodeType::Word, NodeType::Sentiment]);
        let a = tape.value(alpha);
        assert_eq!(a.row_slice(0), &[1.0, 0.0]);
        assert_eq!(a.row_slice(2), &[0.0, 1.0]);
        let beta = node_channel_attention(&mut tape, &g, h, alpha, &present, &p).unwrap();
        let b = tape.value(beta);
        assert_eq!(b.row_slice(2), &[0.0, 0.0, 1.0]);
        for i in 0..3 {
            assert!((b.row_slice(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
