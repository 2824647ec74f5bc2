//! Sparse nonnegative tensor factorization under the Poisson/KL observation
//! model, for single tensors and for collections of tensors coupled through
//! shared factors.
//!
//! The crate is organized around a declarative [`model::ModelSpec`] (index
//! space, factors, observations), sparse coordinate tensors
//! ([`tensor::SparseTensor`]) that carry the observation mask in their
//! support set, two contraction kernels ([`contraction::reconstruct_observed`]
//! and [`contraction::delta`]) that everything else is built from, and three
//! fixed-point solvers (EM, MAP-EM, variational Bayes) in [`solvers`].
//! [`eval`] and [`synth`] provide the link-prediction / completion harness
//! and synthetic benchmark data.

pub mod contraction;
pub mod eval;
pub mod factor;
pub mod io;
mod layout;
pub mod model;
pub mod seed;
pub mod solvers;
pub mod space;
pub mod special;
pub mod synth;
pub mod tensor;

pub use contraction::FactorView;
pub use factor::Factor;
pub use model::{ModelSpec, PriorSpec};
pub use solvers::{fit, Algorithm, FitResult, Solver, SolverConfig};
pub use space::IndexSpace;
pub use tensor::{DenseTensor, SparseTensor};

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("coordinate {coord:?} out of range for index '{index}' (cardinality {card})")]
    OutOfRangeCoordinate {
        coord: Vec<u32>,
        index: String,
        card: usize,
    },
    #[error("duplicate coordinate {coord:?}")]
    DuplicateCoordinate { coord: Vec<u32> },
    #[error("negative value {value} at coordinate {coord:?}")]
    NegativeValue { coord: Vec<u32>, value: f64 },
    #[error("non-finite value at coordinate {coord:?}")]
    NonFiniteValue { coord: Vec<u32> },
    #[error("unknown index '{0}'")]
    UnknownIndex(String),
    #[error("invalid index space: {0}")]
    InvalidIndexSpace(String),
    #[error("dense materialization of {cells} cells exceeds the {limit}-cell guard")]
    TooLargeToMaterialize { cells: u128, limit: u128 },
    #[error("invalid Gamma prior for factor '{factor}': {reason}")]
    InvalidPrior { factor: String, reason: String },
    #[error("model syntax error at line {line}: {message}")]
    SyntaxError { line: usize, message: String },
    #[error("observation '{observation}' declares index '{index}' that no connected factor produces")]
    UncoveredVisibleIndex { observation: String, index: String },
    #[error("factor '{0}' does not participate in any observation")]
    OrphanFactor(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("factor '{factor}' is not connected to observation '{observation}'")]
    FactorNotConnected { factor: String, observation: String },
    #[error("non-finite result in {0}")]
    NonFiniteResult(String),
    #[error("non-finite update for factor '{0}'")]
    NonFiniteUpdate(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("tensor has no entries")]
    EmptyTensor,
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("AUC needs at least one positive and one negative label")]
    SingleClass,
    #[error("support mismatch: {0}")]
    SupportMismatch(String),
    #[error("test labels must be binary: found {0}")]
    NonBinaryLabels(f64),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("factor '{0}' has no variational fields; initialize them before VB updates")]
    MissingVbFields(String),
}

pub type Result<T> = std::result::Result<T, Error>;
