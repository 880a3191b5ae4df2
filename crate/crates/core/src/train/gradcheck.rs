use super::TrainError;
use crate::autograd::{grad_check, GradCheckReport};
use crate::corpus::{parse_embeddings, parse_jsonl, LabeledInstance, OovPolicy};
use crate::kg::{parse_kg_snapshot, parse_lexicon, KgKind};
use crate::model::{init_params, ForwardCtx, ModelConfig, ModelError, PreparedInstance, Resources};

const FIXTURE_JSONL: &str = r#"{"text": "the battery life is excellent but the screen looks dull", "from": 1, "to": 3, "label": "positive", "edges": [[2, 1, "compound"], [2, 0, "det"], [3, 2, "nsubj"], [3, 4, "dep"], [3, 5, "cc"], [8, 7, "nsubj"], [7, 6, "det"], [3, 8, "conj"], [8, 9, "dep"]]}
{"text": "the waiter was rude", "from": 1, "to": 2, "label": "negative", "edges": [[1, 0, "det"], [2, 1, "nsubj"], [2, 3, "dep"]]}
"#;

const FIXTURE_CN: &str = "battery life\tRelatedTo\tbattery\t0.9\nbattery\tRelatedTo\tlaptop\t0.8\nscreen\tPartOf\tlaptop\t0.9\nwaiter\tRelatedTo\tstaff\t0.7\n";
const FIXTURE_SN: &str = "rude\tRelatedTo\twaiter\t0.9\nexcellent\tRelatedTo\tquality\t0.5\ndull\tRelatedTo\tscreen\t0.4\n";
const FIXTURE_GI: &str = "excellent\tPOSITIV\nrude\tNEGATIV\ndull\tNEGATIV\n";

/// A self-contained two-instance corpus with knowledge resources, used
/// when no data files are given. Word vectors come from the hashed OOV
/// policy keyed by `seed`.
pub fn builtin_fixture(seed: u64, dim: usize) -> Result<(Vec<LabeledInstance>, Resources), TrainError> {
    let insts = parse_jsonl(FIXTURE_JSONL)?;
    let resources = Resources {
        embeddings: parse_embeddings("", dim, OovPolicy::HashedUniform { seed, scale: 0.5 })?,
        conceptnet: parse_kg_snapshot(FIXTURE_CN, KgKind::Conceptnet)?,
        senticnet: parse_kg_snapshot(FIXTURE_SN, KgKind::Senticnet)?,
        lexicon: parse_lexicon(FIXTURE_GI)?,
    };
    Ok((insts, resources))
}

/// Finite-difference check of the full batch loss (dropout off) at the
/// configuration's initial parameters.
pub fn check_model_gradients(
    cfg: &ModelConfig,
    batch: &[PreparedInstance],
    eps: f64,
) -> Result<GradCheckReport, TrainError> {
    let mut store = init_params(cfg)?;
    let refs: Vec<&PreparedInstance> = batch.iter().collect();
    let report = grad_check(&mut store, eps, |s, tape| -> Result<_, ModelError> {
        crate::model::batch_loss_on(tape, cfg, s, &refs, ForwardCtx::default())
    })?;
    Ok(report)
}
