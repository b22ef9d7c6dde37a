use thiserror::Error;

/// Errors raised by the cutpaste library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("color count k must be in 1..={max}, got {k}")]
    InvalidColorCount { k: usize, max: usize },

    #[error("entry {index} has color {color}, outside 1..={k}")]
    ColorOutOfRange { index: usize, color: usize, k: usize },

    #[error("color counts differ: {left} vs {right}")]
    ColorCountMismatch { left: usize, right: usize },

    #[error("length mismatch: expected at most {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("empty word")]
    Empty,

    #[error("not a permutation of 1..={n}")]
    NotAPermutation { n: usize },

    #[error("partition has {blocks} blocks, more than k = {k}")]
    TooManyBlocks { blocks: usize, k: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("a flip must change color, got {0} -> {0}")]
    TrivialFlip(usize),

    #[error("index {index} outside 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("not a stochastic matrix: {0}")]
    NotStochastic(String),

    #[error("measure charges the identity matrix")]
    ChargesIdentity,

    #[error("inadmissible measure: {0}")]
    Inadmissible(String),

    #[error("state space {states} exceeds the exact-enumeration limit {limit}")]
    StateSpaceTooLarge { states: u128, limit: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pair is not homogeneous: {0}")]
    NotHomogeneous(String),

    #[error("jump rate undefined on the diagonal")]
    DiagonalRate,

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
