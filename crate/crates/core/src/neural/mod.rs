//! Transformer encoder-decoder with scheme-specific source embeddings,
//! trained with a small reverse-mode autodiff engine in f64.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod gradcheck;
pub mod model;
pub mod tape;
pub mod tensor;
pub mod train;

pub use config::{ModelConfig, Preset};
pub use decode::{greedy_decode, sequence_accuracy, token_accuracy};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use model::{
    embed_factored_baseline, embed_tokens, EmbeddingTables, Example, FactoredTables, Model,
    VocabSizes,
};
pub use tensor::Mat;
pub use train::{EpochStats, TrainSources, Trainer, TrainingSet};
