use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use super::AutogradError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for every parameter, plus the step count.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub hyper: AdamConfig,
    t: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(hyper: AdamConfig) -> Self {
        AdamState {
            hyper,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update using the gradients held in `store`.
    ///
    /// Fails without touching any parameter if a gradient contains NaN.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), AutogradError> {
        let names: Vec<String> = store.names().map(str::to_string).collect();
        for name in &names {
            if store.grad(name).is_some_and(Tensor::has_nan) {
                return Err(AutogradError::NonFinite(format!("gradient of {name}")));
            }
        }

        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.hyper;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);

        for name in names {
            let (value, grad) = store
                .value_and_grad_mut(&name)
                .expect("name taken from the store");
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            let v = self
                .v
                .entry(name)
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            for i in 0..grad.len() {
                let g = grad.data()[i];
                let mi = beta1 * m.data()[i] + (1.0 - beta1) * g;
                let vi = beta2 * v.data()[i] + (1.0 - beta2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                value.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
