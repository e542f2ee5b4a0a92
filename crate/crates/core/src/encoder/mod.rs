//! Miniature BERT-style encoder with a tanh pooler and linear classifier.

mod checkpoint;
mod config;
mod forward;
mod model;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use config::{count_params, layer_params, EncoderConfig, ParamReport, DEFAULT_LAYER_NORM_EPS, NUM_SEGMENTS};
pub use forward::{forward_with, EncoderOutput, ForwardTrace, InputBatch};
pub use model::{param_layout, EncoderModel, ParamSpec, INIT_STD};
