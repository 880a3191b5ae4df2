use super::{GraphInput, ModelError};
use crate::autograd::Tensor;
use crate::corpus::{encode_instance, EmbeddingTable, EncodedInstance, LabeledInstance};
use crate::hdg::{build_hdg_et, build_hdg_ws, init_node_features, HeteroGraph};
use crate::kg::{
    apply_enhancement, detect_sentiment_words, enhancement_weights, EnhancementWeights, KgSnapshot, KnowledgeSwitches,
    PolarityLexicon,
};

/// Everything the preprocessing pipeline reads besides the instances.
#[derive(Clone, Debug)]
pub struct Resources {
    pub embeddings: EmbeddingTable,
    pub conceptnet: KgSnapshot,
    pub senticnet: KgSnapshot,
    pub lexicon: PolarityLexicon,
}

/// Intermediate products for one instance, kept for inspection.
#[derive(Clone, Debug)]
pub struct InstanceGraphs {
    pub enhanced: EncodedInstance,
    pub weights: EnhancementWeights,
    pub ws: HeteroGraph,
    pub et: HeteroGraph,
}

/// encode → enhance → build both graphs → initial node features.
pub fn build_instance_graphs(
    inst: &LabeledInstance,
    res: &Resources,
    switches: KnowledgeSwitches,
) -> Result<InstanceGraphs, ModelError> {
    let enc = encode_instance(inst, &res.embeddings);
    let weights = enhancement_weights(inst, &enc, &res.conceptnet, &res.senticnet, &res.lexicon, switches)?;
    let enhanced = apply_enhancement(&enc, &weights)?;
    let hits = detect_sentiment_words(inst, &res.lexicon);
    let ws = init_node_features(build_hdg_ws(inst, &enhanced, &hits), &res.embeddings, &enhanced);
    let et = init_node_features(
        build_hdg_et(&weights.matched_entities, &res.conceptnet),
        &res.embeddings,
        &enhanced,
    );
    Ok(InstanceGraphs {
        enhanced,
        weights,
        ws,
        et,
    })
}

/// Model-ready constants for one labeled instance.
#[derive(Clone, Debug)]
pub struct PreparedInstance {
    /// Position in the source dataset.
    pub id: usize,
    pub label: usize,
    /// Enhanced flat rows.
    pub flat: Tensor,
    pub aspect_index: usize,
    pub ws: GraphInput,
    pub et: GraphInput,
}

pub fn prepare_instance(
    inst: &LabeledInstance,
    id: usize,
    res: &Resources,
    switches: KnowledgeSwitches,
) -> Result<PreparedInstance, ModelError> {
    let g = build_instance_graphs(inst, res, switches)?;
    Ok(PreparedInstance {
        id,
        label: inst.label.index(),
        aspect_index: g.enhanced.aspect_index,
        flat: g.enhanced.features,
        ws: GraphInput::from_graph(&g.ws)?,
        et: GraphInput::from_graph(&g.et)?,
    })
}

pub fn prepare_dataset(
    insts: &[LabeledInstance],
    res: &Resources,
    switches: KnowledgeSwitches,
) -> Result<Vec<PreparedInstance>, ModelError> {
    insts
        .iter()
        .enumerate()
        .map(|(i, inst)| prepare_instance(inst, i, res, switches))
        .collect()
}
