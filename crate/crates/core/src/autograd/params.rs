use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::AutogradError;

pub const CHECKPOINT_FORMAT: &str = "absa-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named trainable parameters and their accumulated gradients.
///
/// Iteration order is lexicographic by name, which keeps every sweep over
/// parameters (optimizer, regularizer, gradient check) deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    values: BTreeMap<String, Tensor>,
    grads: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        self.grads.insert(name.clone(), Tensor::zeros(value.shape()));
        self.values.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.values.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.values.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar components.
    pub fn num_scalars(&self) -> usize {
        self.values.values().map(Tensor::len).sum()
    }

    /// `Σθ²` over every parameter.
    pub fn sum_squares(&self) -> f64 {
        self.values.values().map(Tensor::sum_squares).sum()
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.values_mut() {
            g.data_mut().fill(0.0);
        }
    }

    pub fn accumulate_grad(&mut self, name: &str, delta: &Tensor) -> Result<(), AutogradError> {
        let g = self
            .grads
            .get_mut(name)
            .ok_or_else(|| AutogradError::UnknownParam(name.to_string()))?;
        if g.len() != delta.len() {
            return Err(AutogradError::shape("accumulate_grad", g.shape(), delta.shape()));
        }
        g.add_assign(delta);
        Ok(())
    }

    pub(crate) fn value_and_grad_mut(&mut self, name: &str) -> Option<(&mut Tensor, &Tensor)> {
        let grad = self.grads.get(name)?;
        let value = self.values.get_mut(name)?;
        Some((value, grad))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            params: self
                .values
                .iter()
                .map(|(k, v)| {
                    (
                        k.clone(),
                        StoredParam {
                            shape: v.shape().to_vec(),
                            data: v.data().to_vec(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self, AutogradError> {
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(AutogradError::Checkpoint(format!(
                "unsupported header {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let mut store = ParamStore::new();
        for (name, p) in ckpt.params {
            store.insert(name, Tensor::new(p.shape, p.data)?);
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), AutogradError> {
        let json = serde_json::to_string(&self.to_checkpoint())
            .map_err(|e| AutogradError::Checkpoint(e.to_string()))?;
        fs::write(path, json).map_err(|e| AutogradError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, AutogradError> {
        let text = fs::read_to_string(path)
            .map_err(|e| AutogradError::Checkpoint(format!("{}: {e}", path.display())))?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| AutogradError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(ckpt)
    }
}

/// On-disk parameter map with a versioned header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub params: BTreeMap<String, StoredParam>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredParam {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}
