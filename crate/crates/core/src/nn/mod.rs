//! Network definition: configuration, layer graph, parameters and forward pass.

mod config;
mod graph;
mod model;
mod params;
mod summary;

pub use config::{
    GroupConfig, HeadConfig, ModelConfig, PdcConfig, StemConfig, INPUT_MULTIPLE, OUTPUT_STRIDE,
};
pub use graph::{
    count_parameters, layers, receptive_field, receptive_fields, GroupSpec, LayerDesc, LayerKind,
    LayerParams, ParamCount, PdcSpec, ReceptiveField, UnitSpec,
};
pub use model::{
    mlcnet_forward, pdc_module, residual_group, residual_unit, ForwardCtx, MlcNet, Mode, NetOutput,
};
pub use params::{
    is_trainable, BnUpdate, ModelParams, BN_MOMENTUM, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use summary::{LayerRow, ModelSummary, StageRow, BYTES_PER_PARAM_WITH_ADAM};
