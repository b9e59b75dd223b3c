pub mod activation;
pub mod bench;
pub mod circuit;
pub mod cnf;
pub mod coloring;
pub mod error;
pub mod error_models;
pub mod gates;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod sparsify;
pub mod tts;

pub use error::{Error, Result};
