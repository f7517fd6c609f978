use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid cone descriptor: {0}")]
    InvalidCone(String),
    #[error("degenerate cone (empty interior): {0}")]
    DegenerateCone(String),
    #[error("density is negative ({value}) at quadrature node {node}")]
    NegativeDensity { node: usize, value: f64 },
    #[error("density is not evaluable at quadrature node {node}")]
    NonFiniteDensity { node: usize },
    #[error("non-finite gradient estimate at quadrature node {node}")]
    NonFiniteGradient { node: usize },
    #[error("radius at node {node} is not positive ({value})")]
    NonPositiveRadius { node: usize, value: f64 },
    #[error("regions live on incompatible grids")]
    IncompatibleGrids,
    #[error("expected a positive scale factor, got {0}")]
    NonPositiveScale(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("point counts differ: {source_len} source vs {target_len} target")]
    SizeMismatch { source_len: usize, target_len: usize },
    #[error("{n} points exceed the exact solver cap of {cap}; use the auction solver")]
    OverCap { n: usize, cap: usize },
    #[error("hypothesis failed: {0}")]
    Hypothesis(String),
    #[error("{skipped} of {total} samples were unevaluable")]
    TooManySkipped { skipped: usize, total: usize },
    #[error("could not parse density spec `{0}`")]
    DensitySpec(String),
}
