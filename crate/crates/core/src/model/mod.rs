//! The hypergraph attention network: per-kind embeddings, stacked two-stage
//! convolution layers, attention pooling and an MLP classifier.
//!
//! Weight matrices are stored `[in, out]` and applied as `x · W + b`.

mod config;
mod forward;
mod params;

pub use config::{ModelConfig, TableSizes};
pub use forward::{ForwardTrace, LayerVars, Model, Participants, Step, GRAPH_NORM_EPS};
pub use params::{layout, Init, ParamSpec, Params};
