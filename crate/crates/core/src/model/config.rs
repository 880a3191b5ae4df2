use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::kg::KnowledgeSwitches;

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Width of the input word vectors.
    pub embedding_dim: usize,
    /// Hidden width `d` shared by every layer.
    pub hidden: usize,
    pub dropout: f64,
    /// Coefficient of the `Σθ²` penalty.
    pub lambda: f64,
    /// Transformer/graph interaction rounds.
    pub rounds: usize,
    pub heads: usize,
    /// Layers per graph branch. Layer 0 is the typed convolution, the rest
    /// use dual-channel attention.
    pub layers: usize,
    pub classes: usize,
    pub leaky_slope: f64,
    pub seed: u64,
    pub use_ws: bool,
    pub use_et: bool,
    pub use_conceptnet: bool,
    pub use_senticnet: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embedding_dim: 300,
            hidden: 64,
            dropout: 0.3,
            lambda: 1e-4,
            rounds: 2,
            heads: 4,
            layers: 2,
            classes: 3,
            leaky_slope: 0.2,
            seed: 0,
            use_ws: true,
            use_et: true,
            use_conceptnet: true,
            use_senticnet: true,
        }
    }
}

impl ModelConfig {
    /// The full-size configuration (hidden width 512).
    pub fn paper() -> Self {
        ModelConfig {
            hidden: 512,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.embedding_dim == 0 || self.hidden == 0 || self.heads == 0 || self.layers == 0 {
            return bad("embedding_dim, hidden, heads and layers must be positive".into());
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return bad(format!("heads ({}) must divide hidden ({})", self.heads, self.hidden));
        }
        if self.classes != 3 {
            return bad(format!("exactly 3 polarity classes are supported, got {}", self.classes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be finite and non-negative", self.lambda));
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky_slope must be finite".into());
        }
        Ok(())
    }

    /// Input width of the classifier: `d` per fused representation.
    pub fn classifier_width(&self) -> usize {
        self.hidden * (1 + usize::from(self.use_ws) + usize::from(self.use_et))
    }

    pub fn knowledge(&self) -> KnowledgeSwitches {
        KnowledgeSwitches {
            conceptnet: self.use_conceptnet,
            senticnet: self.use_senticnet,
        }
    }
}

/// Component removals studied in the ablation table, in table order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    WoWs,
    WoEt,
    WoHete,
    WoCn,
    WoSn,
    WoKgs,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Full,
        Variant::WoWs,
        Variant::WoEt,
        Variant::WoHete,
        Variant::WoCn,
        Variant::WoSn,
        Variant::WoKgs,
    ];

    /// Row label as printed in the ablation table.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoWs => "w/o ws",
            Variant::WoEt => "w/o et",
            Variant::WoHete => "w/o Hete",
            Variant::WoCn => "w/o CN",
            Variant::WoSn => "w/o SN",
            Variant::WoKgs => "w/o KGs",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoWs => "wo_ws",
            Variant::WoEt => "wo_et",
            Variant::WoHete => "wo_hete",
            Variant::WoCn => "wo_cn",
            Variant::WoSn => "wo_sn",
            Variant::WoKgs => "wo_kgs",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.key() == s || v.label() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

/// Applies a component removal to `config`. `Full` returns it unchanged.
pub fn ablation_variant(config: &ModelConfig, variant: Variant) -> ModelConfig {
    let mut c = config.clone();
    match variant {
        Variant::Full => {}
        Variant::WoWs => c.use_ws = false,
        Variant::WoEt => c.use_et = false,
        Variant::WoHete => {
            c.use_ws = false;
            c.use_et = false;
        }
        Variant::WoCn => c.use_conceptnet = false,
        Variant::WoSn => c.use_senticnet = false,
        Variant::WoKgs => {
            c.use_conceptnet = false;
            c.use_senticnet = false;
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifier_widths() {
        let c = ModelConfig::default();
        assert_eq!(ablation_variant(&c, Variant::Full), c);
        assert_eq!(c.classifier_width(), 3 * c.hidden);
        assert_eq!(ablation_variant(&c, Variant::WoWs).classifier_width(), 2 * c.hidden);
        assert_eq!(ablation_variant(&c, Variant::WoEt).classifier_width(), 2 * c.hidden);
        assert_eq!(ablation_variant(&c, Variant::WoHete).classifier_width(), c.hidden);
    }

    #[test]
    fn knowledge_variants() {
        let c = ModelConfig::default();
        let k = ablation_variant(&c, Variant::WoKgs).knowledge();
        assert!(!k.conceptnet && !k.senticnet);
        assert!(!ablation_variant(&c, Variant::WoCn).use_conceptnet);
        assert!(ablation_variant(&c, Variant::WoCn).use_senticnet);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.key().parse::<Variant>().unwrap(), v);
            assert_eq!(v.label().parse::<Variant>().unwrap(), v);
        }
    }

    #[test]
    fn validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig::paper().validate().is_ok());
        let c = ModelConfig {
            hidden: 10,
            heads: 4,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ModelConfig {
            dropout: 1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
