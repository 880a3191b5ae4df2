//! Reverse-mode differentiation over a linear tape of dense matrix ops.
//!
//! Nodes are appended in evaluation order, so the tape is a DAG by
//! construction and reverse insertion order is a valid topological order
//! for the backward sweep. All values are viewed as matrices; a rank-1
//! input behaves like a single row.

use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

use rand::Rng;

use super::params::ParamStore;
use super::rng;
use super::tensor::Tensor;
use super::AutogradError;

/// Variance floor inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-9;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

type Derivative = Rc<dyn Fn(f64) -> f64>;

#[derive(Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor),
    Scale(Var, f64),
    Transpose(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        src: Var,
        axis: usize,
        start: usize,
    },
    Gather {
        src: Var,
        indices: Vec<usize>,
    },
    MeanPool {
        src: Var,
        axis: usize,
    },
    Sum(Var),
    SumSquares(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Tensor,
        inv_std: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Tensor,
    },
    Elementwise {
        src: Var,
        derivative: Derivative,
    },
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::MulConst(..) => "mul_const",
            Op::Scale(..) => "scale",
            Op::Transpose(..) => "transpose",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Gather { .. } => "embedding_select",
            Op::MeanPool { .. } => "mean_pool",
            Op::Sum(..) => "sum",
            Op::SumSquares(..) => "sum_squares",
            Op::Relu(..) => "relu",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Softmax(..) => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Elementwise { .. } => "elementwise",
        };
        f.write_str(name)
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation for later differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
    kinks: u64,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; zeros when `var` did not
    /// influence the loss.
    pub fn get(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.0]),
        }
    }
}

fn as_matrix(t: Tensor) -> Tensor {
    let (r, c) = t.dims();
    Tensor::matrix(r, c, t.into_data())
}

fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = a.dims();
    let m = b.cols();
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let x = ad[i * k + p];
            if x == 0.0 {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (o, &y) in row.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    Tensor::matrix(n, m, out)
}

fn broadcast_dims(
    op: &'static str,
    a: (usize, usize),
    b: (usize, usize),
) -> Result<(usize, usize), AutogradError> {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(AutogradError::shape(op, &[a.0, a.1], &[b.0, b.1])),
    }
}

fn broadcast_binary(a: &Tensor, b: &Tensor, out: (usize, usize), f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (ar, ac) = a.dims();
    let (br, bc) = b.dims();
    let (r, c) = out;
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            let x = a.get(if ar == 1 { 0 } else { i }, if ac == 1 { 0 } else { j });
            let y = b.get(if br == 1 { 0 } else { i }, if bc == 1 { 0 } else { j });
            data.push(f(x, y));
        }
    }
    Tensor::matrix(r, c, data)
}

/// Sums `grad` down to `target` dims, undoing broadcasting.
fn reduce_to(grad: &Tensor, target: (usize, usize)) -> Tensor {
    let (r, c) = grad.dims();
    if (r, c) == target {
        return grad.clone();
    }
    let mut out = Tensor::zeros(&[target.0, target.1]);
    for i in 0..r {
        for j in 0..c {
            let ti = if target.0 == 1 { 0 } else { i };
            let tj = if target.1 == 1 { 0 } else { j };
            let v = out.get(ti, tj) + grad.get(i, j);
            out.set(ti, tj, v);
        }
    }
    out
}

/// Row-wise softmax; entries with `mask == 0` are excluded and get weight 0.
fn softmax_rows(x: &Tensor, mask: Option<&Tensor>) -> Tensor {
    let (r, c) = x.dims();
    let mut out = Tensor::zeros(&[r, c]);
    for i in 0..r {
        let keep = |j: usize| mask.is_none_or(|m| m.get(i, j) != 0.0);
        let max = (0..c)
            .filter(|&j| keep(j))
            .map(|j| x.get(i, j))
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut total = 0.0;
        for j in (0..c).filter(|&j| keep(j)) {
            let e = (x.get(i, j) - max).exp();
            out.set(i, j, e);
            total += e;
        }
        for v in out.row_slice_mut(i) {
            *v /= total;
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A constant input; gradients are not tracked through it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(as_matrix(t), Op::Leaf, false)
    }

    /// A differentiable leaf.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(as_matrix(t), Op::Leaf, true)
    }

    /// Leaf bound to the named parameter. Repeated requests within one tape
    /// return the same variable, so gradients from every use accumulate.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, AutogradError> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| AutogradError::UnknownParam(name.to_string()))?
            .clone();
        let v = self.variable(value);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Parameters bound on this tape, by name.
    pub fn bound_params(&self) -> &BTreeMap<String, Var> {
        &self.params
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(AutogradError::shape("matmul", &[ar, ac], &[br, bc]));
        }
        let value = matmul_raw(self.value(a), self.value(b));
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// Elementwise sum with 2-D broadcasting over size-1 dimensions.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let dims = broadcast_dims("add", self.shape(a), self.shape(b))?;
        let value = broadcast_binary(self.value(a), self.value(b), dims, |x, y| x + y);
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Elementwise product with 2-D broadcasting over size-1 dimensions.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let dims = broadcast_dims("mul", self.shape(a), self.shape(b))?;
        let value = broadcast_binary(self.value(a), self.value(b), dims, |x, y| x * y);
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// Elementwise product with a same-shape constant.
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var, AutogradError> {
        let c = as_matrix(c);
        if self.shape(a) != c.dims() {
            let (r, k) = self.shape(a);
            return Err(AutogradError::shape("mul_const", &[r, k], c.shape()));
        }
        let value = broadcast_binary(self.value(a), &c, c.dims(), |x, y| x * y);
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::MulConst(a, c), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        let rg = self.needs(&[a]);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.needs(&[a]);
        self.push(value, Op::Transpose(a), rg)
    }

    /// Concatenates along `axis` (0 = stack rows, 1 = join columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, AutogradError> {
        let first = *parts.first().ok_or(AutogradError::EmptyConcat)?;
        if axis > 1 {
            return Err(AutogradError::Axis { op: "concat", axis });
        }
        let (r0, c0) = self.shape(first);
        for &p in &parts[1..] {
            let (r, c) = self.shape(p);
            if (axis == 0 && c != c0) || (axis == 1 && r != r0) {
                return Err(AutogradError::shape("concat", &[r0, c0], &[r, c]));
            }
        }
        let value = if axis == 0 {
            let rows: usize = parts.iter().map(|&p| self.shape(p).0).sum();
            let data = parts
                .iter()
                .flat_map(|&p| self.value(p).data().iter().copied())
                .collect();
            Tensor::matrix(rows, c0, data)
        } else {
            let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
            let mut data = Vec::with_capacity(r0 * cols);
            for i in 0..r0 {
                for &p in parts {
                    data.extend_from_slice(self.value(p).row_slice(i));
                }
            }
            Tensor::matrix(r0, cols, data)
        };
        let rg = self.needs(parts);
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Contiguous range `[start, start + len)` along `axis`.
    pub fn slice(&mut self, src: Var, axis: usize, start: usize, len: usize) -> Result<Var, AutogradError> {
        let (r, c) = self.shape(src);
        let extent = match axis {
            0 => r,
            1 => c,
            _ => return Err(AutogradError::Axis { op: "slice", axis }),
        };
        if len == 0 || start + len > extent {
            return Err(AutogradError::Range {
                op: "slice",
                start,
                len,
                extent,
            });
        }
        let x = self.value(src);
        let value = if axis == 0 {
            Tensor::matrix(len, c, x.data()[start * c..(start + len) * c].to_vec())
        } else {
            let mut data = Vec::with_capacity(r * len);
            for i in 0..r {
                data.extend_from_slice(&x.row_slice(i)[start..start + len]);
            }
            Tensor::matrix(r, len, data)
        };
        let rg = self.needs(&[src]);
        Ok(self.push(value, Op::Slice { src, axis, start }, rg))
    }

    /// Selects rows by index (repeats allowed).
    pub fn embedding_select(&mut self, src: Var, indices: &[usize]) -> Result<Var, AutogradError> {
        let (r, c) = self.shape(src);
        if indices.is_empty() {
            return Err(AutogradError::Range {
                op: "embedding_select",
                start: 0,
                len: 0,
                extent: r,
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(AutogradError::Range {
                op: "embedding_select",
                start: bad,
                len: 1,
                extent: r,
            });
        }
        let x = self.value(src);
        let data = indices
            .iter()
            .flat_map(|&i| x.row_slice(i).iter().copied())
            .collect();
        let value = Tensor::matrix(indices.len(), c, data);
        let rg = self.needs(&[src]);
        Ok(self.push(
            value,
            Op::Gather {
                src,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    /// Mean over `axis`: axis 0 yields a `1 × c` row, axis 1 an `r × 1` column.
    pub fn mean_pool(&mut self, src: Var, axis: usize) -> Result<Var, AutogradError> {
        let (r, c) = self.shape(src);
        let x = self.value(src);
        let value = match axis {
            0 => Tensor::matrix(
                1,
                c,
                (0..c)
                    .map(|j| (0..r).map(|i| x.get(i, j)).sum::<f64>() / r as f64)
                    .collect(),
            ),
            1 => Tensor::matrix(
                r,
                1,
                (0..r)
                    .map(|i| x.row_slice(i).iter().sum::<f64>() / c as f64)
                    .collect(),
            ),
            _ => return Err(AutogradError::Axis { op: "mean_pool", axis }),
        };
        let rg = self.needs(&[src]);
        Ok(self.push(value, Op::MeanPool { src, axis }, rg))
    }

    pub fn sum(&mut self, src: Var) -> Var {
        let value = Tensor::scalar(self.value(src).data().iter().sum());
        let rg = self.needs(&[src]);
        self.push(value, Op::Sum(src), rg)
    }

    pub fn sum_squares(&mut self, src: Var) -> Var {
        let value = Tensor::scalar(self.value(src).sum_squares());
        let rg = self.needs(&[src]);
        self.push(value, Op::SumSquares(src), rg)
    }

    /// Hash of the sign pattern of every ReLU-family input recorded so far.
    /// Two evaluations with equal signatures lie on the same smooth piece.
    pub fn kink_signature(&self) -> u64 {
        self.kinks
    }

    fn note_signs(&mut self, src: Var) {
        let mut h = self.kinks ^ 0xcbf2_9ce4_8422_2325;
        for &x in self.value(src).data() {
            h = (h ^ u64::from(x > 0.0)).wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.kinks = h;
    }

    pub fn relu(&mut self, src: Var) -> Var {
        self.note_signs(src);
        let value = self.value(src).map(|x| x.max(0.0));
        let rg = self.needs(&[src]);
        self.push(value, Op::Relu(src), rg)
    }

    pub fn leaky_relu(&mut self, src: Var, slope: f64) -> Var {
        self.note_signs(src);
        let value = self.value(src).map(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.needs(&[src]);
        self.push(value, Op::LeakyRelu(src, slope), rg)
    }

    /// Shift-stabilized softmax along `axis`.
    pub fn softmax(&mut self, src: Var, axis: usize) -> Result<Var, AutogradError> {
        match axis {
            1 => Ok(self.softmax_rows(src, None)),
            0 => {
                let t = self.transpose(src);
                let s = self.softmax_rows(t, None);
                Ok(self.transpose(s))
            }
            _ => Err(AutogradError::Axis { op: "softmax", axis }),
        }
    }

    /// Row-wise softmax restricted to entries where `mask` is non-zero.
    /// Masked entries receive exactly zero weight.
    pub fn masked_softmax(&mut self, src: Var, mask: &Tensor) -> Result<Var, AutogradError> {
        let (r, c) = self.shape(src);
        if mask.dims() != (r, c) {
            return Err(AutogradError::shape("masked_softmax", &[r, c], mask.shape()));
        }
        Ok(self.softmax_rows(src, Some(mask)))
    }

    fn softmax_rows(&mut self, src: Var, mask: Option<&Tensor>) -> Var {
        let value = softmax_rows(self.value(src), mask);
        let rg = self.needs(&[src]);
        self.push(value, Op::Softmax(src), rg)
    }

    /// Layer normalization of each row, followed by the affine map
    /// `γ ⊙ x̂ + β` with `γ`, `β` of shape `1 × cols`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, AutogradError> {
        let (r, c) = self.shape(x);
        for p in [gamma, beta] {
            if self.shape(p) != (1, c) {
                let (pr, pc) = self.shape(p);
                return Err(AutogradError::shape("layer_norm", &[r, c], &[pr, pc]));
            }
        }
        let xv = self.value(x);
        let mut normalized = Tensor::zeros(&[r, c]);
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = xv.row_slice(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(s);
            for (o, v) in normalized.row_slice_mut(i).iter_mut().zip(row) {
                *o = (v - mean) * s;
            }
        }
        let g = self.value(gamma);
        let b = self.value(beta);
        let value = broadcast_binary(
            &broadcast_binary(&normalized, g, (r, c), |a, b| a * b),
            b,
            (r, c),
            |a, b| a + b,
        );
        let rg = self.needs(&[x, gamma, beta]);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            rg,
        ))
    }

    /// Inverted dropout. With `train == false` or `rate == 0` the input is
    /// returned untouched; otherwise survivors are scaled by `1 / (1 − rate)`.
    /// The mask is drawn from the stream `(seed, keys)`.
    pub fn dropout(
        &mut self,
        src: Var,
        rate: f64,
        train: bool,
        seed: u64,
        keys: &[u64],
    ) -> Result<Var, AutogradError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(AutogradError::DropoutRate(rate));
        }
        if !train || rate == 0.0 {
            return Ok(src);
        }
        let (r, c) = self.shape(src);
        let mut rng = rng::stream(seed, keys);
        let keep = 1.0 / (1.0 - rate);
        let mask = (0..r * c)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        self.mul_const(src, Tensor::matrix(r, c, mask))
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of `logits`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, AutogradError> {
        let (r, c) = self.shape(logits);
        if labels.len() != r {
            return Err(AutogradError::shape("cross_entropy", &[r, c], &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(AutogradError::Label { label: bad, classes: c });
        }
        let x = self.value(logits);
        let probs = softmax_rows(x, None);
        let mut total = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            let row = x.row_slice(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[l];
        }
        let value = Tensor::scalar(total / r as f64);
        let rg = self.needs(&[logits]);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Applies `f` elementwise, with `derivative` as its backward rule.
    /// The caller is responsible for `derivative` being correct.
    pub fn elementwise(
        &mut self,
        src: Var,
        f: impl Fn(f64) -> f64,
        derivative: impl Fn(f64) -> f64 + 'static,
    ) -> Var {
        let value = self.value(src).map(f);
        let rg = self.needs(&[src]);
        self.push(
            value,
            Op::Elementwise {
                src,
                derivative: Rc::new(derivative),
            },
            rg,
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutogradError> {
        let (r, c) = self.shape(loss);
        if r * c != 1 {
            return Err(AutogradError::NotScalar { shape: vec![r, c] });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    /// Backward pass that adds parameter gradients into `store`.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<(), AutogradError> {
        let grads = self.backward(loss)?;
        for (name, &v) in &self.params {
            store.accumulate_grad(name, &grads.get(v))?;
        }
        Ok(())
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut send = |v: Var, delta: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&delta),
                slot => *slot = Some(delta),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                send(*a, matmul_raw(g, &val(*b).transpose()));
                send(*b, matmul_raw(&val(*a).transpose(), g));
            }
            Op::Add(a, b) => {
                send(*a, reduce_to(g, val(*a).dims()));
                send(*b, reduce_to(g, val(*b).dims()));
            }
            Op::Mul(a, b) => {
                let dims = g.dims();
                let ga = broadcast_binary(g, val(*b), dims, |x, y| x * y);
                let gb = broadcast_binary(g, val(*a), dims, |x, y| x * y);
                send(*a, reduce_to(&ga, val(*a).dims()));
                send(*b, reduce_to(&gb, val(*b).dims()));
            }
            Op::MulConst(a, c) => {
                send(*a, broadcast_binary(g, c, g.dims(), |x, y| x * y));
            }
            Op::Scale(a, s) => send(*a, g.map(|x| x * s)),
            Op::Transpose(a) => send(*a, g.transpose()),
            Op::Concat { parts, axis } => {
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = val(p).dims();
                    let piece = if *axis == 0 {
                        let c = g.cols();
                        Tensor::matrix(pr, pc, g.data()[offset * c..(offset + pr) * c].to_vec())
                    } else {
                        let mut data = Vec::with_capacity(pr * pc);
                        for i in 0..pr {
                            data.extend_from_slice(&g.row_slice(i)[offset..offset + pc]);
                        }
                        Tensor::matrix(pr, pc, data)
                    };
                    offset += if *axis == 0 { pr } else { pc };
                    send(p, piece);
                }
            }
            Op::Slice { src, axis, start } => {
                let (r, c) = val(*src).dims();
                let mut out = Tensor::zeros(&[r, c]);
                let (gr, gc) = g.dims();
                for i in 0..gr {
                    for j in 0..gc {
                        let (ti, tj) = if *axis == 0 { (i + start, j) } else { (i, j + start) };
                        out.set(ti, tj, g.get(i, j));
                    }
                }
                send(*src, out);
            }
            Op::Gather { src, indices } => {
                let (r, c) = val(*src).dims();
                let mut out = Tensor::zeros(&[r, c]);
                for (k, &i) in indices.iter().enumerate() {
                    for (o, v) in out.row_slice_mut(i).iter_mut().zip(g.row_slice(k)) {
                        *o += v;
                    }
                }
                send(*src, out);
            }
            Op::MeanPool { src, axis } => {
                let (r, c) = val(*src).dims();
                let mut out = Tensor::zeros(&[r, c]);
                for i in 0..r {
                    for j in 0..c {
                        let v = if *axis == 0 {
                            g.get(0, j) / r as f64
                        } else {
                            g.get(i, 0) / c as f64
                        };
                        out.set(i, j, v);
                    }
                }
                send(*src, out);
            }
            Op::Sum(src) => {
                let s = g.item();
                send(*src, Tensor::filled(&[val(*src).rows(), val(*src).cols()], s));
            }
            Op::SumSquares(src) => {
                let s = g.item();
                send(*src, val(*src).map(|x| 2.0 * s * x));
            }
            Op::Relu(src) => {
                let x = val(*src);
                send(*src, broadcast_binary(g, x, g.dims(), |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
            }
            Op::LeakyRelu(src, slope) => {
                let x = val(*src);
                let slope = *slope;
                send(
                    *src,
                    broadcast_binary(g, x, g.dims(), |gv, xv| if xv > 0.0 { gv } else { slope * gv }),
                );
            }
            Op::Softmax(src) => {
                let y = &node.value;
                let (r, c) = y.dims();
                let mut out = Tensor::zeros(&[r, c]);
                for i in 0..r {
                    let dot: f64 = (0..c).map(|j| y.get(i, j) * g.get(i, j)).sum();
                    for j in 0..c {
                        out.set(i, j, y.get(i, j) * (g.get(i, j) - dot));
                    }
                }
                send(*src, out);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let (r, c) = normalized.dims();
                let gam = val(*gamma);
                let mut dx = Tensor::zeros(&[r, c]);
                let mut dgamma = Tensor::zeros(&[1, c]);
                let mut dbeta = Tensor::zeros(&[1, c]);
                for (i, &s) in inv_std.iter().enumerate().take(r) {
                    let xhat = normalized.row_slice(i);
                    let gi = g.row_slice(i);
                    let dxhat: Vec<f64> = (0..c).map(|j| gi[j] * gam.get(0, j)).collect();
                    let mean_d = dxhat.iter().sum::<f64>() / c as f64;
                    let mean_dx = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    for j in 0..c {
                        dx.set(i, j, s * (dxhat[j] - mean_d - xhat[j] * mean_dx));
                        dgamma.data_mut()[j] += gi[j] * xhat[j];
                        dbeta.data_mut()[j] += gi[j];
                    }
                }
                send(*x, dx);
                send(*gamma, dgamma);
                send(*beta, dbeta);
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let s = g.item() / labels.len() as f64;
                let mut out = probs.clone();
                for (i, &l) in labels.iter().enumerate() {
                    let v = out.get(i, l) - 1.0;
                    out.set(i, l, v);
                }
                send(*logits, out.map(|x| x * s));
            }
            Op::Elementwise { src, derivative } => {
                let x = val(*src);
                send(*src, broadcast_binary(g, x, g.dims(), |gv, xv| gv * derivative(xv)));
            }
        }
    }
}
