//! Layer-wise knowledge distillation for miniature BERT-style encoders.

pub mod bench;
pub mod data;
pub mod distill;
pub mod encoder;
pub mod error;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
