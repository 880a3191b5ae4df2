#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use absa_core::autograd::Tensor;
use absa_core::hdg::NodeType;
use absa_core::train::TrainConfig;

pub type Mat = Vec<Vec<f64>>;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn synthetic_config() -> TrainConfig {
    TrainConfig::from_file(&fixture("synthetic.toml")).expect("synthetic.toml loads")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    (0..r).map(|_| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

pub fn to_tensor(m: &Mat) -> Tensor {
    Tensor::from_rows(m)
}

pub fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|i| t.row_slice(i).to_vec()).collect()
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

/// Symmetric weighted adjacency with random types, no self loops.
pub struct RandomGraph {
    pub types: Vec<NodeType>,
    pub adj: Mat,
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, kinds: &[NodeType], density: f64) -> RandomGraph {
    let types = (0..n).map(|_| kinds[rng.random_range(0..kinds.len())]).collect();
    let mut adj = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < density {
                let w = rng.random_range(0.1..1.0);
                adj[i][j] = w;
                adj[j][i] = w;
            }
        }
    }
    RandomGraph { types, adj }
}

pub fn types_present(types: &[NodeType]) -> Vec<NodeType> {
    types.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
}

pub fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let inner = b.len();
    let cols = b[0].len();
    a.iter()
        .map(|row| {
            assert_eq!(row.len(), inner);
            (0..cols).map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum()).collect()
        })
        .collect()
}

pub fn relu(m: &Mat) -> Mat {
    m.iter().map(|r| r.iter().map(|&x| x.max(0.0)).collect()).collect()
}

/// `D^{-1/2} (A + I) D^{-1/2}` by explicit loops.
pub fn normalize(adj: &Mat) -> Mat {
    let n = adj.len();
    let deg: Vec<f64> = (0..n).map(|i| 1.0 + adj[i].iter().sum::<f64>()).collect();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let a = adj[i][j] + if i == j { 1.0 } else { 0.0 };
            m[i][j] = a / deg[i].sqrt() / deg[j].sqrt();
        }
    }
    m
}

fn neighbors(adj: &Mat, i: usize) -> Vec<usize> {
    (0..adj.len()).filter(|&j| j == i || adj[i][j] != 0.0).collect()
}

/// Typed projection `P_i = h_i W_{type(i)}`.
pub fn typed_projection(types: &[NodeType], h: &Mat, w: &dyn Fn(NodeType) -> Mat) -> Mat {
    types
        .iter()
        .zip(h)
        .map(|(&t, row)| matmul(&vec![row.clone()], &w(t)).remove(0))
        .collect()
}

/// `ReLU(Σ_τ Ã_{:,τ} h_τ W_τ)`, summing block by block.
pub fn hetero_conv(adj: &Mat, types: &[NodeType], h: &Mat, w: &dyn Fn(NodeType) -> Mat) -> Mat {
    let n = adj.len();
    let norm = normalize(adj);
    let out_dim = w(types[0])[0].len();
    let mut out = vec![vec![0.0; out_dim]; n];
    for tau in types_present(types) {
        let wt = w(tau);
        for i in 0..n {
            for j in (0..n).filter(|&j| types[j] == tau) {
                for c in 0..out_dim {
                    let hw: f64 = (0..h[j].len()).map(|k| h[j][k] * wt[k][c]).sum();
                    out[i][c] += norm[i][j] * hw;
                }
            }
        }
    }
    relu(&out)
}

/// Single-type GCN layer `ReLU(Ã H W)`.
pub fn gcn(adj: &Mat, h: &Mat, w: &Mat) -> Mat {
    relu(&matmul(&matmul(&normalize(adj), h), w))
}

/// Type-channel weights, one row per node, one column per present type.
pub fn type_attention(adj: &Mat, types: &[NodeType], h: &Mat, mu: &dyn Fn(NodeType) -> Vec<f64>, slope: f64) -> Mat {
    let present = types_present(types);
    let d = h[0].len();
    (0..adj.len())
        .map(|i| {
            let nb = neighbors(adj, i);
            let mut scores = vec![None; present.len()];
            for (k, &t) in present.iter().enumerate() {
                let members: Vec<usize> = nb.iter().copied().filter(|&j| types[j] == t).collect();
                if members.is_empty() {
                    continue;
                }
                let m = mu(t);
                let mut agg = vec![0.0; d];
                for &j in &members {
                    for c in 0..d {
                        agg[c] += h[j][c];
                    }
                }
                scores[k] = Some(leaky(dot(&m[..d], &h[i]) + dot(&m[d..], &agg), slope));
            }
            softmax_some(&scores)
        })
        .collect()
}

/// Node-channel weights `β` given type weights `alpha`.
pub fn node_attention(adj: &Mat, types: &[NodeType], h: &Mat, alpha: &Mat, nu: &[f64], slope: f64) -> Mat {
    let present = types_present(types);
    let d = h[0].len();
    let n = adj.len();
    (0..n)
        .map(|i| {
            let nb = neighbors(adj, i);
            let scores: Vec<Option<f64>> = (0..n)
                .map(|j| {
                    nb.contains(&j).then(|| {
                        let k = present.iter().position(|&t| t == types[j]).unwrap();
                        leaky(dot(&nu[..d], &h[i]) + dot(&nu[d..], &h[j]), slope) * alpha[i][k]
                    })
                })
                .collect();
            softmax_some(&scores)
        })
        .collect()
}

fn softmax_some(scores: &[Option<f64>]) -> Vec<f64> {
    let max = scores.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| s.map_or(0.0, |v| (v - max).exp())).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

/// `(relation, other end, weight bits)` for every triple of a TSV snapshot
/// whose head or tail equals `query`, found by scanning the whole file.
/// Repeated `(head, relation, tail)` lines count once, at their largest weight.
pub fn brute_force_neighbors(tsv: &str, query: &str) -> BTreeSet<(String, String, u64)> {
    let q = query.to_lowercase();
    let mut triples: Vec<(String, String, String, f64)> = Vec::new();
    for line in tsv.lines() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let t = (
            cols[0].trim().to_lowercase(),
            cols[1].trim().to_string(),
            cols[2].trim().to_lowercase(),
            cols[3].trim().parse::<f64>().unwrap(),
        );
        match triples.iter_mut().find(|u| (&u.0, &u.1, &u.2) == (&t.0, &t.1, &t.2)) {
            Some(u) => u.3 = u.3.max(t.3),
            None => triples.push(t),
        }
    }
    let mut out = BTreeSet::new();
    for (head, rel, tail, w) in triples {
        if head == q {
            out.insert((rel.clone(), tail.clone(), w.to_bits()));
        }
        if tail == q {
            out.insert((rel, head, w.to_bits()));
        }
    }
    out
}

/// Every distinct head and tail in a snapshot, plus a few absent concepts.
pub fn snapshot_queries(tsv: &str) -> Vec<String> {
    let mut qs: BTreeSet<String> = tsv
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .flat_map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            [c[0].trim().to_lowercase(), c[2].trim().to_lowercase()]
        })
        .collect();
    for miss in ["noon", "weekdays", "quantum", "Battery"] {
        qs.insert(miss.to_string());
    }
    qs.into_iter().collect()
}

pub mod lib_side {
    use std::collections::BTreeMap;

    use absa_core::autograd::{Tape, Tensor};
    use absa_core::hdg::{GraphKind, NodeType, NormalizedAdjacency};
    use absa_core::model::{
        attention_layer, hetero_conv, node_channel_attention, type_channel_attention, DualAttentionParams, GraphInput,
        HeteroLayerParams,
    };

    use super::{to_mat, to_tensor, Mat, RandomGraph};

    pub struct Params {
        pub w: BTreeMap<NodeType, Mat>,
        pub mu: BTreeMap<NodeType, Vec<f64>>,
        pub nu: Vec<f64>,
        pub slope: f64,
    }

    pub struct Outputs {
        pub conv: Mat,
        pub alpha: Mat,
        pub beta: Mat,
        pub attention: Mat,
        pub norm: Mat,
    }

    fn column(v: &[f64]) -> Tensor {
        Tensor::matrix(v.len(), 1, v.to_vec())
    }

    pub fn run(g: &RandomGraph, h: &Mat, p: &Params) -> Outputs {
        let norm = NormalizedAdjacency::from_dense(&to_tensor(&g.adj), g.types.clone());
        let input = GraphInput::new(GraphKind::Ws, &norm, to_tensor(h), 0);
        let mut tape = Tape::new();
        let hv = tape.constant(to_tensor(h));
        let hetero = HeteroLayerParams {
            layer: 0,
            weights: p.w.iter().map(|(&t, m)| (t, tape.constant(to_tensor(m)))).collect(),
        };
        let dual = DualAttentionParams {
            layer: 1,
            mu: p.mu.iter().map(|(&t, v)| (t, tape.constant(column(v)))).collect(),
            nu: tape.constant(column(&p.nu)),
            slope: p.slope,
        };
        let conv = hetero_conv(&mut tape, &input, hv, &hetero).unwrap();
        let (alpha, types) = type_channel_attention(&mut tape, &input, hv, &dual).unwrap();
        let beta = node_channel_attention(&mut tape, &input, hv, alpha, &types, &dual).unwrap();
        let att = attention_layer(&mut tape, &input, hv, &hetero, &dual).unwrap();
        Outputs {
            conv: to_mat(tape.value(conv)),
            alpha: to_mat(tape.value(alpha)),
            beta: to_mat(tape.value(beta)),
            attention: to_mat(tape.value(att)),
            norm: to_mat(norm.matrix()),
        }
    }
}

/// Random graph, features and parameters for one oracle comparison.
pub struct OracleCase {
    pub graph: RandomGraph,
    pub h: Mat,
    pub params: lib_side::Params,
}

pub fn oracle_case(seed: u64) -> OracleCase {
    let mut r = rng(seed);
    let n = r.random_range(2..9);
    let d = r.random_range(1..6);
    let out = r.random_range(1..6);
    let density = r.random_range(0.2..0.8);
    let graph = random_graph(&mut r, n, &NodeType::ALL, density);
    let h = random_mat(&mut r, n, d);
    let mut w = std::collections::BTreeMap::new();
    let mut mu = std::collections::BTreeMap::new();
    for t in NodeType::ALL {
        w.insert(t, random_mat(&mut r, d, out));
        mu.insert(t, random_mat(&mut r, 1, 2 * d).remove(0));
    }
    let nu = random_mat(&mut r, 1, 2 * d).remove(0);
    OracleCase {
        graph,
        h,
        params: lib_side::Params { w, mu, nu, slope: 0.2 },
    }
}

/// Largest deviation of the library's conv, type weights, node weights and
/// attention layer from the loop oracles.
pub fn oracle_deviations(c: &OracleCase) -> [f64; 4] {
    let lib = lib_side::run(&c.graph, &c.h, &c.params);
    let w = |t: NodeType| c.params.w[&t].clone();
    let mu = |t: NodeType| c.params.mu[&t].clone();
    let g = &c.graph;
    let conv = hetero_conv(&g.adj, &g.types, &c.h, &w);
    let alpha = type_attention(&g.adj, &g.types, &c.h, &mu, c.params.slope);
    let beta = node_attention(&g.adj, &g.types, &c.h, &alpha, &c.params.nu, c.params.slope);
    let att = relu(&matmul(&beta, &typed_projection(&g.types, &c.h, &w)));
    [
        max_abs_diff(&lib.conv, &conv),
        max_abs_diff(&lib.alpha, &alpha),
        max_abs_diff(&lib.beta, &beta),
        max_abs_diff(&lib.attention, &att),
    ]
}

/// Synthetic config shrunk for quick tests.
pub fn small_synthetic_config(epochs: usize) -> TrainConfig {
    let mut c = synthetic_config();
    c.model.hidden = 8;
    c.model.heads = 2;
    c.epochs = epochs;
    c
}

/// All twenty synthetic instances prepared under `cfg`'s variant.
pub fn synthetic_all(cfg: &TrainConfig) -> Vec<absa_core::model::PreparedInstance> {
    let data = absa_core::train::load_data(cfg).unwrap();
    let all: Vec<_> = data.train.iter().chain(&data.test).cloned().collect();
    absa_core::model::prepare_dataset(&all, &data.resources, cfg.effective_model().knowledge()).unwrap()
}

/// Loss of `batch` under `store` with the given λ, dropout off.
pub fn loss_with(
    cfg: &absa_core::model::ModelConfig,
    store: &absa_core::autograd::ParamStore,
    batch: &[absa_core::model::PreparedInstance],
    lambda: f64,
) -> f64 {
    let cfg = absa_core::model::ModelConfig { lambda, ..cfg.clone() };
    let refs: Vec<_> = batch.iter().collect();
    let mut tape = absa_core::autograd::Tape::new();
    let l = absa_core::model::batch_loss_on(&mut tape, &cfg, store, &refs, Default::default()).unwrap();
    tape.value(l).item()
}
