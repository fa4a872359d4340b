pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod pipeline;
pub mod scenesynth;
pub mod training;

pub use error::{Error, Result};
