use thiserror::Error;

/// Every failure the toolkit can report.
///
/// Variants are grouped by the exit code the command-line front end maps them
/// to: precondition and graph failures, synthesis failures, and numerical
/// failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: {detail}")]
    Dimension { context: String, detail: String },

    #[error("contract violated in {context}: {detail}")]
    Contract { context: String, detail: String },

    #[error("graph has no directed spanning tree")]
    NoSpanningTree,

    #[error("root set {root:?} does not reach every node of the graph")]
    RootSetNotCovering { root: Vec<usize> },

    #[error("agent {agent} violates {assumption}")]
    Assumption { agent: usize, assumption: String },

    #[error("target model invalid: {0}")]
    InvalidTarget(String),

    #[error("scenario {field}: {detail}")]
    Scenario { field: String, detail: String },

    #[error("unsupported structure: {0}")]
    Unsupported(String),

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    #[error("internal synthesis check failed: {0}")]
    SynthesisBug(String),

    #[error("Lyapunov equation has no solution: {0}")]
    NoSolution(String),

    #[error("H-infinity norm is infinite: {0}")]
    InfiniteNorm(String),

    #[error("rank decision indeterminate in {test}: singular value {value:e} within one decade of threshold {threshold:e}")]
    Indeterminate { test: String, value: f64, threshold: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {detail}")]
    Io { path: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Dimension { context: context.into(), detail: detail.into() }
    }

    pub(crate) fn contract(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Contract { context: context.into(), detail: detail.into() }
    }

    /// Stable machine-readable code printed by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "DIMENSION",
            Error::Contract { .. } => "CONTRACT",
            Error::NoSpanningTree => "NO_SPANNING_TREE",
            Error::RootSetNotCovering { .. } => "ROOT_SET_NOT_COVERING",
            Error::Assumption { .. } => "ASSUMPTION_VIOLATED",
            Error::InvalidTarget(_) => "INVALID_TARGET",
            Error::Scenario { .. } => "SCENARIO",
            Error::Unsupported(_) => "UNSUPPORTED_STRUCTURE",
            Error::Synthesis(_) => "SYNTHESIS_FAILED",
            Error::SynthesisBug(_) => "SYNTHESIS_CHECK_FAILED",
            Error::NoSolution(_) => "NO_SOLUTION",
            Error::InfiniteNorm(_) => "INFINITE_NORM",
            Error::Indeterminate { .. } => "INDETERMINATE_RANK",
            Error::Numerical(_) => "NUMERICAL",
            Error::Io { .. } => "IO",
        }
    }

    /// Process exit code: 2 precondition/graph, 3 synthesis, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension { .. }
            | Error::Contract { .. }
            | Error::NoSpanningTree
            | Error::RootSetNotCovering { .. }
            | Error::Assumption { .. }
            | Error::InvalidTarget(_)
            | Error::Scenario { .. }
            | Error::Io { .. } => 2,
            Error::Unsupported(_) | Error::Synthesis(_) | Error::SynthesisBug(_) => 3,
            Error::NoSolution(_)
            | Error::InfiniteNorm(_)
            | Error::Indeterminate { .. }
            | Error::Numerical(_) => 4,
        }
    }
}
