use alloc::boxed::Box;
use alloc::string::String;
use thiserror::Error;

use crate::losses::LossKind;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid size for {what}: got {got}, need at least {min}")]
    InvalidSize { what: &'static str, got: usize, min: usize },
    #[error("cannot split {n} observations into {k} folds")]
    InvalidFolds { k: usize, n: usize },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    #[error("{kind:?} loss undefined at {value} (boundary {boundary})")]
    Domain { kind: LossKind, value: f64, boundary: f64 },
    #[error("link undefined at v = {value}")]
    LinkDomain { value: f64 },
    #[error("no canonical link for {0:?} loss")]
    NoCanonicalPair(LossKind),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("function has no derivative along coordinate {coordinate}")]
    NotDifferentiable { coordinate: usize },
    #[error("linear system is singular; add a ridge term")]
    Singular,
    #[error("dataset layout does not match the functional: {0}")]
    Layout(&'static str),
    #[error("average policy effect requires non-empty draws from both policy measures")]
    MissingWeights,
    #[error("representer left the loss domain at observation {index} (alpha = {value})")]
    FitDomain { index: usize, value: f64 },
    #[error("no feasible initial point: {0}")]
    Initialization(&'static str),
    #[error("TMLE fluctuation is undefined: sum of squared representer values is zero")]
    DegenerateFluctuation,
    #[error("treatment arm {arm} has {got} units, need at least {min}")]
    InsufficientArm { arm: u8, got: usize, min: usize },
    #[error("non-finite value while evaluating {0}")]
    NonFinite(&'static str),
    #[error("unsupported combination: {0}")]
    Unsupported(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: Box<Error> },
}

pub type Result<T> = core::result::Result<T, Error>;
