pub mod analysis;
pub mod bpe;
pub mod cli;
pub mod config;
pub mod corpus_io;
pub mod encoding;
pub mod error;
pub mod experiment;
pub mod neural;
pub mod synth;
pub mod vocab;

pub use error::{Error, Result};
