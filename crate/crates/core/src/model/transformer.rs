use super::ModelError;
use crate::autograd::{AutogradError, Tape, Var};

/// Dropout settings plus the stream keys of the current step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DropoutSite {
    pub rate: f64,
    pub train: bool,
    pub seed: u64,
    /// Typically `[step, instance, round]`.
    pub keys: Vec<u64>,
}

impl DropoutSite {
    pub fn off() -> Self {
        DropoutSite::default()
    }

    pub fn with_key(&self, key: u64) -> Self {
        let mut s = self.clone();
        s.keys.push(key);
        s
    }

    /// Dropout whose mask stream is `(seed, layer, extra, keys…)`.
    pub fn apply(&self, tape: &mut Tape, v: Var, layer: u64, extra: u64) -> Result<Var, AutogradError> {
        let mut keys = vec![layer, extra];
        keys.extend_from_slice(&self.keys);
        tape.dropout(v, self.rate, self.train, self.seed, &keys)
    }
}

pub(crate) const SITE_INPUT: u64 = 1;
const SITE_ATTENTION: u64 = 2;
const SITE_FFN: u64 = 3;

#[derive(Clone, Debug)]
pub struct TransformerParams {
    pub heads: usize,
    pub ln1_gamma: Var,
    pub ln1_beta: Var,
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub ln2_gamma: Var,
    pub ln2_beta: Var,
    pub ff1_w: Var,
    pub ff1_b: Var,
    pub ff2_w: Var,
    pub ff2_b: Var,
}

/// Pre-norm block: `y = x + MHA(LN(x))`, then `y + FFN(LN(y))`.
pub fn transformer_block(tape: &mut Tape, x: Var, p: &TransformerParams, drop: &DropoutSite) -> Result<Var, ModelError> {
    Ok(transformer_block_traced(tape, x, p, drop)?.0)
}

/// As [`transformer_block`], also returning each head's `n × n` attention matrix.
pub fn transformer_block_traced(
    tape: &mut Tape,
    x: Var,
    p: &TransformerParams,
    drop: &DropoutSite,
) -> Result<(Var, Vec<Var>), ModelError> {
    let (_, d) = tape.shape(x);
    if p.heads == 0 || d % p.heads != 0 {
        return Err(ModelError::Config(format!("heads ({}) must divide width ({d})", p.heads)));
    }
    let dh = d / p.heads;
    let xn = tape.layer_norm(x, p.ln1_gamma, p.ln1_beta)?;
    let q = tape.matmul(xn, p.wq)?;
    let k = tape.matmul(xn, p.wk)?;
    let v = tape.matmul(xn, p.wv)?;
    let mut heads = Vec::with_capacity(p.heads);
    let mut weights = Vec::with_capacity(p.heads);
    for hd in 0..p.heads {
        let qh = tape.slice(q, 1, hd * dh, dh)?;
        let kh = tape.slice(k, 1, hd * dh, dh)?;
        let vh = tape.slice(v, 1, hd * dh, dh)?;
        let kt = tape.transpose(kh);
        let s = tape.matmul(qh, kt)?;
        let s = tape.scale(s, 1.0 / (dh as f64).sqrt());
        let a = tape.softmax(s, 1)?;
        weights.push(a);
        let a = drop.apply(tape, a, SITE_ATTENTION, hd as u64)?;
        heads.push(tape.matmul(a, vh)?);
    }
    let o = tape.concat(&heads, 1)?;
    let o = tape.matmul(o, p.wo)?;
    let y = tape.add(x, o)?;

    let yn = tape.layer_norm(y, p.ln2_gamma, p.ln2_beta)?;
    let f = tape.matmul(yn, p.ff1_w)?;
    let f = tape.add(f, p.ff1_b)?;
    let f = tape.relu(f);
    let f = tape.matmul(f, p.ff2_w)?;
    let f = tape.add(f, p.ff2_b)?;
    let f = drop.apply(tape, f, SITE_FFN, 0)?;
    Ok((tape.add(y, f)?, weights))
}
