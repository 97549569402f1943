use thiserror::Error;

/// Every failure the library can report.
///
/// Variants are grouped by the exit-code classes of the command-line tool:
/// input problems, numerical breakdowns, and non-convergence.
#[derive(Debug, Error)]
pub enum SgotError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid rank: {0}")]
    Rank(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("marginal error: {0}")]
    Marginal(String),

    #[error("incompatible systems: {0}")]
    IncompatibleSystems(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("empty spectral measure")]
    EmptyMeasure,

    #[error("defective or near-singular operator: {0}")]
    DefectiveOperator(String),

    #[error("zero eigenvalue cannot be mapped to a generator eigenvalue")]
    ZeroEigenvalue,

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("ill-defined distance: {0}")]
    IllDefined(String),

    #[error("degenerate search direction: {0}")]
    DegenerateDirection(String),

    #[error("projection error: {0}")]
    Projection(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SgotError {
    /// Short machine-readable tag, used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            SgotError::Dimension(_) => "DimensionError",
            SgotError::InsufficientData(_) => "InsufficientDataError",
            SgotError::Rank(_) => "RankError",
            SgotError::Parameter(_) => "ParameterError",
            SgotError::Parse(_) => "ParseError",
            SgotError::Marginal(_) => "MarginalError",
            SgotError::IncompatibleSystems(_) => "IncompatibleSystemsError",
            SgotError::Stratification(_) => "StratificationError",
            SgotError::EmptyMeasure => "EmptyMeasureError",
            SgotError::DefectiveOperator(_) => "DefectiveOperatorError",
            SgotError::ZeroEigenvalue => "ZeroEigenvalueError",
            SgotError::Numerical(_) => "NumericalError",
            SgotError::IllDefined(_) => "IllDefinedError",
            SgotError::DegenerateDirection(_) => "DegenerateDirectionError",
            SgotError::Projection(_) => "ProjectionError",
            SgotError::NonConvergence(_) => "NonConvergenceError",
            SgotError::Io(_) => "IoError",
            SgotError::Json(_) => "ParseError",
        }
    }

    /// Process exit code: 2 input error, 3 numerical failure, 4 non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            SgotError::Dimension(_)
            | SgotError::InsufficientData(_)
            | SgotError::Rank(_)
            | SgotError::Parameter(_)
            | SgotError::Parse(_)
            | SgotError::Marginal(_)
            | SgotError::IncompatibleSystems(_)
            | SgotError::Stratification(_)
            | SgotError::EmptyMeasure
            | SgotError::Io(_)
            | SgotError::Json(_) => 2,
            SgotError::DefectiveOperator(_)
            | SgotError::ZeroEigenvalue
            | SgotError::Numerical(_)
            | SgotError::IllDefined(_)
            | SgotError::DegenerateDirection(_)
            | SgotError::Projection(_) => 3,
            SgotError::NonConvergence(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, SgotError>;
