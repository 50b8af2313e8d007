use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structure(String),
    #[error("cycle detected through node {0}")]
    Cycle(usize),
    #[error("node {node} references missing child {child}")]
    DanglingChild { node: usize, child: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("degenerate tessellation: centroids {0} and {1} coincide")]
    DegenerateTessellation(usize, usize),
    #[error("linear program solver failed: {0}")]
    SolverFailure(String),
    #[error("node {0} has a gate whose cells do not factorize over its children")]
    Intractable(usize),
    #[error("joint index count {count} at node {node} exceeds cap {cap}")]
    JointCap { node: usize, count: usize, cap: usize },
    #[error("undefined bound: {0}")]
    UndefinedBound(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
