mod common;

use std::collections::BTreeMap;

use absa_core::autograd::{Tape, Tensor};
use absa_core::hdg::{GraphKind, NodeType, NormalizedAdjacency};
use absa_core::model::{hetero_conv, GraphInput, HeteroLayerParams};
use common::*;

#[test]
fn layers_match_loop_oracles_on_random_graphs() {
    for seed in 0..40 {
        let case = oracle_case(seed);
        let dev = oracle_deviations(&case);
        for (what, d) in ["conv", "type weights", "node weights", "attention layer"].iter().zip(dev) {
            assert!(d < 1e-12, "seed {seed}: {what} deviates by {d:e}");
        }
    }
}

#[test]
fn attention_rows_sum_to_one() {
    for seed in 100..140 {
        let case = oracle_case(seed);
        let out = lib_side::run(&case.graph, &case.h, &case.params);
        for row in out.alpha.iter().chain(&out.beta) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-9, "seed {seed}: row sums to {s}");
            assert!(row.iter().all(|&x| x >= 0.0));
        }
    }
}

#[test]
fn node_weights_vanish_outside_the_neighborhood() {
    for seed in 200..220 {
        let case = oracle_case(seed);
        let out = lib_side::run(&case.graph, &case.h, &case.params);
        let n = case.graph.adj.len();
        for i in 0..n {
            for j in 0..n {
                if i != j && case.graph.adj[i][j] == 0.0 {
                    assert_eq!(out.beta[i][j], 0.0);
                }
            }
        }
    }
}

#[test]
fn stacked_normalization_is_symmetric_and_bounded() {
    for seed in 300..340 {
        let case = oracle_case(seed);
        let out = lib_side::run(&case.graph, &case.h, &case.params);
        let n = out.norm.len();
        assert!(max_abs_diff(&out.norm, &normalize(&case.graph.adj)) < 1e-14);
        for i in 0..n {
            for j in 0..n {
                assert!((out.norm[i][j] - out.norm[j][i]).abs() < 1e-12);
                assert!((0.0..=1.0).contains(&out.norm[i][j]));
            }
        }
    }
}

#[test]
fn two_node_normalization_is_one_half() {
    let a = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
    let norm = NormalizedAdjacency::from_dense(&a, vec![NodeType::Word, NodeType::Sentiment]);
    assert_eq!(norm.matrix().data(), &[0.5, 0.5, 0.5, 0.5]);
    let blocks = norm.blocks();
    assert_eq!(blocks[&(NodeType::Word, NodeType::Sentiment)].data(), &[0.5]);
}

#[test]
fn single_type_conv_is_a_plain_gcn_layer() {
    for seed in 400..420 {
        let mut r = rng(seed);
        let n = 2 + (seed as usize % 6);
        let g = random_graph(&mut r, n, &[NodeType::Word], 0.5);
        let h = random_mat(&mut r, n, 4);
        let w = random_mat(&mut r, 4, 3);
        let input = GraphInput::new(
            GraphKind::Ws,
            &NormalizedAdjacency::from_dense(&to_tensor(&g.adj), g.types.clone()),
            to_tensor(&h),
            0,
        );
        let mut tape = Tape::new();
        let hv = tape.constant(to_tensor(&h));
        let wv = tape.constant(to_tensor(&w));
        let p = HeteroLayerParams {
            layer: 0,
            weights: BTreeMap::from([(NodeType::Word, wv)]),
        };
        let out = hetero_conv(&mut tape, &input, hv, &p).unwrap();
        let d = max_abs_diff(&to_mat(tape.value(out)), &gcn(&g.adj, &h, &w));
        assert!(d < 1e-12, "seed {seed}: {d:e}");
    }
}

#[test]
fn two_node_two_type_conv_by_hand() {
    // Ã is 0.5 everywhere; h = [[1], [2]]; W_word = [[1, -1]], W_sent = [[3, 0]].
    let a = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
    let types = vec![NodeType::Word, NodeType::Sentiment];
    let input = GraphInput::new(
        GraphKind::Ws,
        &NormalizedAdjacency::from_dense(&a, types),
        Tensor::from_rows(&[vec![1.0], vec![2.0]]),
        0,
    );
    let mut tape = Tape::new();
    let h = tape.constant(input.features.clone());
    let ww = tape.constant(Tensor::row(vec![1.0, -1.0]));
    let ws = tape.constant(Tensor::row(vec![3.0, 0.0]));
    let p = HeteroLayerParams {
        layer: 0,
        weights: BTreeMap::from([(NodeType::Word, ww), (NodeType::Sentiment, ws)]),
    };
    let out = hetero_conv(&mut tape, &input, h, &p).unwrap();
    // 0.5·[1, −1] + 0.5·[6, 0] = [3.5, −0.5] → ReLU.
    assert_eq!(tape.value(out).data(), &[3.5, 0.0, 3.5, 0.0]);
}
