//! The classifier: typed graph convolution, dual-channel attention over
//! node types and neighbors, a transformer block over the flat sequence,
//! round-based interaction between the two views, and fusion.

mod config;
mod layers;
mod network;
mod prepare;
mod transformer;

use thiserror::Error;

use crate::autograd::AutogradError;
use crate::hdg::NodeType;
use crate::kg::KgError;

pub use config::{ablation_variant, ModelConfig, Variant};
pub use layers::{
    attention_layer, hetero_conv, node_channel_attention, type_channel_attention, typed_projection,
    DualAttentionParams, GraphInput, HeteroLayerParams,
};
pub use network::{
    batch_loss_on, forward, fuse_and_classify, init_params, iterative_interaction, loss, param_shapes, regularizer, Branches,
    ForwardCtx, ForwardOutput, Interaction, Model,
};
pub use prepare::{build_instance_graphs, prepare_dataset, prepare_instance, InstanceGraphs, PreparedInstance, Resources};
pub use transformer::{transformer_block, transformer_block_traced, DropoutSite, TransformerParams};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("layer {layer}: no {what} for node type {node_type}")]
    MissingParam {
        what: &'static str,
        layer: usize,
        node_type: NodeType,
    },
    #[error("flat sequence has {rows} rows but the ws graph has {words} word nodes")]
    RowMismatch { rows: usize, words: usize },
    #[error("graph has no node features")]
    MissingFeatures,
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("missing parameter {0}")]
    MissingParamName(String),
}
