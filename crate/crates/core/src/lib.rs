pub mod activation;
pub mod analysis;
pub mod autograd;
pub mod cli;
pub mod data;
pub mod error;
pub mod models;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
