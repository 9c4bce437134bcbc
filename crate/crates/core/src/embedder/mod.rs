//! Embedding network: configuration, parameters, inference and training.
//!
//! A model is an ordered stack of conv/relu/pool/flatten/dense layers whose
//! last dense layer produces the embedding, followed by a linear
//! classification head producing logits for the softmax term.

mod model;
mod train;

pub use model::{build_model, LayerSpec, Model, ModelConfig, Param};
pub use train::{embed, embed_space, train, EpochRecord, TrainConfig, TrainHistory};
