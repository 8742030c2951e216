pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod evalmetrics;
pub mod experiment;
pub mod nets;
pub mod objectives;
pub mod tempering;
pub mod trainer;

pub use error::{Error, Result};
