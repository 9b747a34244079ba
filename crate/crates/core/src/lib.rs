pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod grad;
pub mod inspect;
pub mod model;
pub mod tensor;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
