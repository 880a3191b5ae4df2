use std::fmt;

use serde::Serialize;

use super::trainer::{prepare_split, train_prepared, EvalReport, LoadedData};
use super::{TrainConfig, TrainError};
use crate::model::{ablation_variant, Variant};

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub label: &'static str,
    pub classifier_width: usize,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

/// One row per variant, in [`Variant::ALL`] order.
#[derive(Clone, Debug, Serialize)]
pub struct AblationTable {
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

/// Trains and evaluates every variant with the same seed. A failing
/// variant records its error and the sweep continues.
pub fn run_ablations(cfg: &TrainConfig, data: &LoadedData) -> AblationTable {
    let rows = Variant::ALL
        .into_iter()
        .map(|variant| {
            let vcfg = TrainConfig {
                variant,
                ..cfg.clone()
            };
            let width = ablation_variant(&vcfg.model, variant).classifier_width();
            let result = (|| -> Result<EvalReport, TrainError> {
                let (tr, te) = prepare_split(&vcfg.effective_model(), data)?;
                Ok(train_prepared(&vcfg, &tr, &te)?.test_report)
            })();
            let (report, error) = match result {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            AblationRow {
                variant,
                label: variant.label(),
                classifier_width: width,
                report,
                error,
            }
        })
        .collect();
    AblationTable { seed: cfg.seed, rows }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>6} {:>9} {:>9}", "variant", "width", "accuracy", "macro_f1")?;
        for r in &self.rows {
            match &r.report {
                Some(rep) => writeln!(
                    f,
                    "{:<10} {:>6} {:>9.4} {:>9.4}",
                    r.label, r.classifier_width, rep.metrics.accuracy, rep.metrics.macro_f1
                )?,
                None => writeln!(
                    f,
                    "{:<10} {:>6} error: {}",
                    r.label,
                    r.classifier_width,
                    r.error.as_deref().unwrap_or("")
                )?,
            }
        }
        write!(f, "seed {}", self.seed)
    }
}
