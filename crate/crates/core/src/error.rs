use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised anywhere in the core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape error in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("tokenization error in entry {index} ({entry:?}): unknown symbol {symbol:?}")]
    Tokenize {
        index: usize,
        entry: String,
        symbol: char,
    },
    #[error("entry {index} contains token {token} outside vocabulary of size {vocab}")]
    OutOfVocab { index: usize, token: usize, vocab: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("training diverged at step {step}: {msg}")]
    Diverged { step: usize, msg: String },
    #[error("parameter mismatch: {0}")]
    Params(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
