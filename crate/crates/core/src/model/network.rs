use rand::Rng;

use super::layers::{attention_layer, hetero_conv, DualAttentionParams, GraphInput, HeteroLayerParams};
use super::transformer::{transformer_block, DropoutSite, TransformerParams, SITE_INPUT};
use super::{ModelConfig, ModelError, PreparedInstance};
use crate::autograd::{rng, ParamStore, Tape, Tensor, Var};
use crate::hdg::{GraphKind, NodeType};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Xavier,
    /// Uniform with variance `2 / fan_in`, for projections followed by ReLU.
    He,
    Zeros,
    Ones,
}

fn graph_prefix(kind: GraphKind) -> &'static str {
    match kind {
        GraphKind::Ws => "ws",
        GraphKind::Et => "et",
    }
}

fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.hidden;
    let mut v: Vec<(String, Vec<usize>, Init)> = Vec::new();
    let mut push = |name: String, shape: [usize; 2], init: Init| v.push((name, shape.to_vec(), init));
    push("input.w".into(), [cfg.embedding_dim, d], Init::Xavier);
    push("input.b".into(), [1, d], Init::Zeros);
    for ln in ["tf.ln1", "tf.ln2"] {
        push(format!("{ln}.gamma"), [1, d], Init::Ones);
        push(format!("{ln}.beta"), [1, d], Init::Zeros);
    }
    for w in ["tf.wq", "tf.wk", "tf.wv", "tf.wo"] {
        push(w.into(), [d, d], Init::Xavier);
    }
    push("tf.ff1.w".into(), [d, 4 * d], Init::Xavier);
    push("tf.ff1.b".into(), [1, 4 * d], Init::Zeros);
    push("tf.ff2.w".into(), [4 * d, d], Init::Xavier);
    push("tf.ff2.b".into(), [1, d], Init::Zeros);
    let kinds = [(GraphKind::Ws, cfg.use_ws), (GraphKind::Et, cfg.use_et)];
    for (kind, on) in kinds {
        if !on {
            continue;
        }
        let g = graph_prefix(kind);
        for l in 0..cfg.layers {
            for t in kind.node_types() {
                push(format!("{g}.l{l}.w.{t}"), [d, d], Init::He);
            }
            if l > 0 {
                for t in kind.node_types() {
                    push(format!("{g}.l{l}.mu.{t}"), [2 * d, 1], Init::Xavier);
                }
                push(format!("{g}.l{l}.nu"), [2 * d, 1], Init::Xavier);
            }
        }
    }
    if cfg.use_ws {
        push("fold.w".into(), [d, d], Init::Xavier);
    }
    push("cls.w".into(), [cfg.classifier_width(), cfg.classes], Init::Xavier);
    push("cls.b".into(), [1, cfg.classes], Init::Zeros);
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

/// Name and shape of every parameter the configuration needs, sorted by name.
pub fn param_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    layout(cfg).into_iter().map(|(n, s, _)| (n, s)).collect()
}

/// Xavier-uniform matrices (He-uniform for graph projections), zero biases, unit layer-norm gains. Each
/// parameter draws from its own stream keyed by name, so adding a
/// parameter never shifts the others.
pub fn init_params(cfg: &ModelConfig) -> Result<ParamStore, ModelError> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    for (name, shape, init) in layout(cfg) {
        let t = match init {
            Init::Zeros => Tensor::zeros(&shape),
            Init::Ones => Tensor::filled(&shape, 1.0),
            Init::Xavier | Init::He => {
                let bound = if init == Init::He {
                    (6.0 / shape[0] as f64).sqrt()
                } else {
                    (6.0 / (shape[0] + shape[1]) as f64).sqrt()
                };
                let mut r = rng::named_stream(cfg.seed, &name, &[]);
                let data = (0..shape[0] * shape[1]).map(|_| r.random_range(-bound..bound)).collect();
                Tensor::matrix(shape[0], shape[1], data)
            }
        };
        store.insert(name, t);
    }
    Ok(store)
}

/// Inference/training switches for one forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ForwardCtx {
    pub train: bool,
    /// Optimizer step, mixed into dropout streams.
    pub step: u64,
}

/// Projected graph inputs entering the interaction.
#[derive(Clone, Copy, Debug, Default)]
pub struct Branches<'a> {
    pub ws: Option<(&'a GraphInput, Var)>,
    pub et: Option<(&'a GraphInput, Var)>,
}

/// Node states after the final round.
#[derive(Clone, Copy, Debug)]
pub struct Interaction {
    pub flat: Var,
    pub ws_nodes: Option<Var>,
    pub et_nodes: Option<Var>,
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    /// `1 × 3`.
    pub logits: Var,
    pub flat: Var,
    pub ws_repr: Option<Var>,
    pub et_repr: Option<Var>,
}

fn transformer_params(tape: &mut Tape, store: &ParamStore, heads: usize) -> Result<TransformerParams, ModelError> {
    let mut p = |n: &str| tape.param(store, n);
    Ok(TransformerParams {
        heads,
        ln1_gamma: p("tf.ln1.gamma")?,
        ln1_beta: p("tf.ln1.beta")?,
        wq: p("tf.wq")?,
        wk: p("tf.wk")?,
        wv: p("tf.wv")?,
        wo: p("tf.wo")?,
        ln2_gamma: p("tf.ln2.gamma")?,
        ln2_beta: p("tf.ln2.beta")?,
        ff1_w: p("tf.ff1.w")?,
        ff1_b: p("tf.ff1.b")?,
        ff2_w: p("tf.ff2.w")?,
        ff2_b: p("tf.ff2.b")?,
    })
}

fn run_branch(
    tape: &mut Tape,
    cfg: &ModelConfig,
    store: &ParamStore,
    g: &GraphInput,
    mut h: Var,
) -> Result<Var, ModelError> {
    let prefix = graph_prefix(g.kind);
    let types: [NodeType; 2] = g.kind.node_types();
    for layer in 0..cfg.layers {
        let mut weights = std::collections::BTreeMap::new();
        for t in types {
            weights.insert(t, tape.param(store, &format!("{prefix}.l{layer}.w.{t}"))?);
        }
        let hetero = HeteroLayerParams { layer, weights };
        h = if layer == 0 {
            hetero_conv(tape, g, h, &hetero)?
        } else {
            let mut mu = std::collections::BTreeMap::new();
            for t in types {
                mu.insert(t, tape.param(store, &format!("{prefix}.l{layer}.mu.{t}"))?);
            }
            let dual = DualAttentionParams {
                layer,
                mu,
                nu: tape.param(store, &format!("{prefix}.l{layer}.nu"))?,
                slope: cfg.leaky_slope,
            };
            attention_layer(tape, g, h, &hetero, &dual)?
        };
    }
    Ok(h)
}

/// `cfg.rounds` rounds of: transformer over the flat rows, copy the flat
/// rows into the ws word nodes, run both graph branches, and add the
/// projected ws word outputs back onto the flat rows.
pub fn iterative_interaction(
    tape: &mut Tape,
    cfg: &ModelConfig,
    store: &ParamStore,
    mut flat: Var,
    branches: Branches<'_>,
    drop: &DropoutSite,
) -> Result<Interaction, ModelError> {
    let rows = tape.shape(flat).0;
    if let Some((g, _)) = branches.ws {
        let words = g.count_of(NodeType::Word);
        if words != rows {
            return Err(ModelError::RowMismatch { rows, words });
        }
    }
    let mut ws = branches.ws.map(|(_, h)| h);
    let mut et = branches.et.map(|(_, h)| h);
    if cfg.rounds == 0 {
        return Ok(Interaction {
            flat,
            ws_nodes: ws,
            et_nodes: et,
        });
    }
    let tf = transformer_params(tape, store, cfg.heads)?;
    let fold = if branches.ws.is_some() {
        Some(tape.param(store, "fold.w")?)
    } else {
        None
    };
    for round in 0..cfg.rounds {
        flat = transformer_block(tape, flat, &tf, &drop.with_key(round as u64))?;
        if let (Some((g, _)), Some(h)) = (branches.ws, ws) {
            let n = g.node_count();
            let merged = if n > rows {
                let rest = tape.slice(h, 0, rows, n - rows)?;
                tape.concat(&[flat, rest], 0)?
            } else {
                flat
            };
            let out = run_branch(tape, cfg, store, g, merged)?;
            let words = tape.slice(out, 0, 0, rows)?;
            let back = tape.matmul(words, fold.expect("fold.w bound with ws branch"))?;
            ws = Some(out);
            if let (Some((ge, _)), Some(he)) = (branches.et, et) {
                et = Some(run_branch(tape, cfg, store, ge, he)?);
            }
            flat = tape.add(flat, back)?;
        } else if let (Some((ge, _)), Some(he)) = (branches.et, et) {
            et = Some(run_branch(tape, cfg, store, ge, he)?);
        }
    }
    Ok(Interaction {
        flat,
        ws_nodes: ws,
        et_nodes: et,
    })
}

/// Row-concatenates the representations and applies `h W + b`.
pub fn fuse_and_classify(tape: &mut Tape, parts: &[Var], w: Var, b: Var) -> Result<Var, ModelError> {
    let h = tape.concat(parts, 1)?;
    let z = tape.matmul(h, w)?;
    Ok(tape.add(z, b)?)
}

/// `Σθ²` over every parameter in `store`.
pub fn regularizer(tape: &mut Tape, store: &ParamStore) -> Result<Var, ModelError> {
    let mut total: Option<Var> = None;
    let names: Vec<String> = store.names().map(str::to_owned).collect();
    for name in names {
        let p = tape.param(store, &name)?;
        let s = tape.sum_squares(p);
        total = Some(match total {
            Some(t) => tape.add(t, s)?,
            None => s,
        });
    }
    Ok(total.unwrap_or_else(|| tape.constant(Tensor::scalar(0.0))))
}

/// Mean cross-entropy over the rows of `logits` plus `λ Σθ²`.
pub fn loss(
    tape: &mut Tape,
    logits: Var,
    labels: &[usize],
    store: &ParamStore,
    lambda: f64,
) -> Result<Var, ModelError> {
    let ce = tape.cross_entropy(logits, labels)?;
    if lambda == 0.0 {
        return Ok(ce);
    }
    let reg = regularizer(tape, store)?;
    let reg = tape.scale(reg, lambda);
    Ok(tape.add(ce, reg)?)
}

/// Full forward pass for one instance.
pub fn forward(
    tape: &mut Tape,
    cfg: &ModelConfig,
    store: &ParamStore,
    inst: &PreparedInstance,
    ctx: ForwardCtx,
) -> Result<ForwardOutput, ModelError> {
    let drop = DropoutSite {
        rate: cfg.dropout,
        train: ctx.train,
        seed: cfg.seed,
        keys: vec![ctx.step, inst.id as u64],
    };
    let w_in = tape.param(store, "input.w")?;
    let b_in = tape.param(store, "input.b")?;
    let project = |tape: &mut Tape, x: Var| -> Result<Var, ModelError> {
        let z = tape.matmul(x, w_in)?;
        Ok(tape.add(z, b_in)?)
    };
    let x = tape.constant(inst.flat.clone());
    let x = drop.apply(tape, x, SITE_INPUT, 0)?;
    let flat = project(tape, x)?;
    let mut branches = Branches::default();
    if cfg.use_ws {
        let f = tape.constant(inst.ws.features.clone());
        branches.ws = Some((&inst.ws, project(tape, f)?));
    }
    if cfg.use_et {
        let f = tape.constant(inst.et.features.clone());
        branches.et = Some((&inst.et, project(tape, f)?));
    }
    let out = iterative_interaction(tape, cfg, store, flat, branches, &drop)?;
    let flat_aspect = tape.slice(out.flat, 0, inst.aspect_index, 1)?;
    let ws_repr = match out.ws_nodes {
        Some(h) => Some(tape.slice(h, 0, inst.ws.readout, 1)?),
        None => None,
    };
    let et_repr = match out.et_nodes {
        Some(h) => Some(tape.slice(h, 0, inst.et.readout, 1)?),
        None => None,
    };
    let parts: Vec<Var> = std::iter::once(flat_aspect).chain(ws_repr).chain(et_repr).collect();
    let w = tape.param(store, "cls.w")?;
    let b = tape.param(store, "cls.b")?;
    let logits = fuse_and_classify(tape, &parts, w, b)?;
    Ok(ForwardOutput {
        logits,
        flat: out.flat,
        ws_repr,
        et_repr,
    })
}

/// A configuration together with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        let params = init_params(&config)?;
        Ok(Model { config, params })
    }

    /// Wraps existing parameters after checking that names and shapes match
    /// the configuration exactly.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = param_shapes(&config);
        for (name, shape) in &expected {
            let found = params
                .get(name)
                .ok_or_else(|| ModelError::MissingParamName(name.clone()))?;
            if found.shape() != shape.as_slice() {
                return Err(ModelError::ParamShape {
                    name: name.clone(),
                    expected: shape.clone(),
                    found: found.shape().to_vec(),
                });
            }
        }
        if let Some(extra) = params.names().find(|n| !expected.iter().any(|(e, _)| e == n)) {
            return Err(ModelError::Config(format!("unexpected parameter {extra}")));
        }
        Ok(Model { config, params })
    }

    /// Logits for `inst` with dropout disabled.
    pub fn logits(&self, inst: &PreparedInstance) -> Result<[f64; 3], ModelError> {
        let mut tape = Tape::new();
        let out = forward(&mut tape, &self.config, &self.params, inst, ForwardCtx::default())?;
        let v = tape.value(out.logits).data();
        Ok([v[0], v[1], v[2]])
    }

    /// Argmax of the logits; ties go to the lowest class index.
    pub fn predict(&self, inst: &PreparedInstance) -> Result<usize, ModelError> {
        Ok(argmax(&self.logits(inst)?))
    }

    /// Loss of a batch on a fresh tape, returning `(tape, loss)` so the
    /// caller can run backward.
    pub fn batch_loss(&self, batch: &[&PreparedInstance], ctx: ForwardCtx) -> Result<(Tape, Var), ModelError> {
        let mut tape = Tape::new();
        let l = batch_loss_on(&mut tape, &self.config, &self.params, batch, ctx)?;
        Ok((tape, l))
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean loss of `batch` recorded on `tape` (used by gradient checks).
pub fn batch_loss_on(
    tape: &mut Tape,
    cfg: &ModelConfig,
    store: &ParamStore,
    batch: &[&PreparedInstance],
    ctx: ForwardCtx,
) -> Result<Var, ModelError> {
    let mut logits = Vec::with_capacity(batch.len());
    for inst in batch {
        logits.push(forward(tape, cfg, store, inst, ctx)?.logits);
    }
    let stacked = tape.concat(&logits, 0)?;
    let labels: Vec<usize> = batch.iter().map(|i| i.label).collect();
    loss(tape, stacked, &labels, store, cfg.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdg::NormalizedAdjacency;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            embedding_dim: 3,
            hidden: 4,
            heads: 2,
            dropout: 0.0,
            ..Default::default()
        }
    }

    fn instance(id: usize, label: usize) -> PreparedInstance {
        let mut a = Tensor::zeros(&[3, 3]);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 2, 1.0);
        a.set(2, 1, 1.0);
        let ws_norm = NormalizedAdjacency::from_dense(&a, vec![NodeType::Word, NodeType::Word, NodeType::Sentiment]);
        let flat = Tensor::matrix(2, 3, vec![0.5, -0.2, 0.1, 0.3, 0.8, -0.6]);
        let ws_feat = Tensor::matrix(3, 3, [flat.data(), &[0.2, 0.2, -0.4][..]].concat());
        let mut b = Tensor::zeros(&[2, 2]);
        b.set(0, 1, 1.0);
        b.set(1, 0, 1.0);
        let et_norm = NormalizedAdjacency::from_dense(&b, vec![NodeType::Entity, NodeType::Sentence]);
        PreparedInstance {
            id,
            label,
            flat,
            aspect_index: 0,
            ws: GraphInput::new(GraphKind::Ws, &ws_norm, ws_feat, 0),
            et: GraphInput::new(GraphKind::Et, &et_norm, Tensor::matrix(2, 3, vec![0.1, 0.4, 0.0, 0.4, 0.3, -0.25]), 1),
        }
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let cfg = tiny_cfg();
        let a = init_params(&cfg).unwrap();
        let b = init_params(&cfg).unwrap();
        assert_eq!(a.to_checkpoint(), b.to_checkpoint());
        assert_eq!(a.get("cls.w").unwrap().shape(), &[12, 3]);
        assert!(Model::from_params(cfg.clone(), a.clone()).is_ok());
        let other = ModelConfig { use_et: false, ..cfg };
        assert!(Model::from_params(other, a).is_err());
    }

    #[test]
    fn zero_classifier_gives_ln3() {
        let mut m = Model::new(tiny_cfg()).unwrap();
        *m.params.get_mut("cls.w").unwrap() = Tensor::zeros(&[12, 3]);
        m.config.lambda = 0.0;
        let batch = [&instance(0, 0), &instance(1, 2)];
        let (tape, l) = m.batch_loss(&batch, ForwardCtx::default()).unwrap();
        assert!((tape.value(l).item() - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rounds_change_output() {
        let inst = instance(0, 1);
        let m1 = Model::new(ModelConfig { rounds: 1, ..tiny_cfg() }).unwrap();
        let m2 = Model {
            config: ModelConfig { rounds: 2, ..tiny_cfg() },
            params: m1.params.clone(),
        };
        assert_ne!(m1.logits(&inst).unwrap(), m2.logits(&inst).unwrap());
    }

    #[test]
    fn zero_rounds_reads_out_projected_inputs() {
        let inst = instance(0, 1);
        let m = Model::new(ModelConfig { rounds: 0, ..tiny_cfg() }).unwrap();
        let mut tape = Tape::new();
        let out = forward(&mut tape, &m.config, &m.params, &inst, ForwardCtx::default()).unwrap();
        let w = m.params.get("input.w").unwrap();
        let et = tape.value(out.et_repr.unwrap()).data().to_vec();
        let expect: Vec<f64> = (0..4)
            .map(|j| (0..3).map(|k| inst.et.features.get(1, k) * w.get(k, j)).sum())
            .collect();
        for (a, b) in et.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn row_mismatch_is_reported() {
        let mut inst = instance(0, 0);
        inst.flat = Tensor::zeros(&[3, 3]);
        let m = Model::new(tiny_cfg()).unwrap();
        assert!(matches!(m.logits(&inst), Err(ModelError::RowMismatch { rows: 3, words: 2 })));
    }

    #[test]
    fn full_model_gradient_check() {
        let cfg = ModelConfig { lambda: 1e-3, ..tiny_cfg() };
        let mut store = init_params(&cfg).unwrap();
        let (a, b) = (instance(0, 0), instance(1, 2));
        let report = crate::autograd::grad_check(&mut store, 1e-6, |s, tape| -> Result<Var, ModelError> {
            batch_loss_on(tape, &cfg, s, &[&a, &b], ForwardCtx::default())
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{:?} {}", report.worst, report.max_rel_error);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 1.0, 0.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }
}
