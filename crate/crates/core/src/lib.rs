pub mod audio;
pub mod decoder;
pub mod error;
pub mod frontend;
pub mod gradsuite;
pub mod lm;
pub mod nn;
pub mod rng;
pub mod stream;
pub mod tags;
pub mod tensor;
pub mod token2wav;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
