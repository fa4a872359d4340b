use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("{op}: expected shape {expected:?}, got {got:?}")]
    Shape {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("{op}: backward called without a cached training-mode forward pass")]
    NoCache { op: &'static str },
    #[error("invalid layer configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

pub(crate) fn shape_err(op: &'static str, expected: &[usize], got: &[usize]) -> NnError {
    NnError::Shape {
        op,
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}
