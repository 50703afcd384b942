use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid dimension {0}: need at least 2")]
    InvalidDimension(usize),

    #[error("unsupported dimension {dim}: supported range is {min}..={max}")]
    UnsupportedDimension { dim: usize, min: usize, max: usize },

    #[error("state is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not anti-Hermitian (max deviation {deviation:e})")]
    NotAntiHermitian { deviation: f64 },

    #[error("matrix is not unitary (||U^dag U - I||_F = {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("matrix is not a rank-1 projector (deviation {deviation:e})")]
    NotProjector { deviation: f64 },

    #[error("trace is {trace}, expected {expected}")]
    WrongTrace { trace: f64, expected: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },

    #[error("vectors are not orthonormal (max deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("trace product has imaginary residue {residue:e}")]
    ImaginaryResidue { residue: f64 },

    #[error("{count} basis elements satisfy the assignment rule; at most one may")]
    MultipleOutcomes { count: usize },

    #[error("post-selected state is orthogonal to the forward state (|overlap| = {overlap:e})")]
    OrthogonalPostSelection { overlap: f64 },

    #[error("no analytic oracle for the fixed backward distribution")]
    OracleNotApplicable,

    #[error("degenerate instance: pair sums are zero or parallel")]
    DegenerateInstance,

    #[error("invalid SIC: max pair deviation {max_pair_deviation:e}, identity deviation {identity_deviation:e}")]
    InvalidSic {
        max_pair_deviation: f64,
        identity_deviation: f64,
    },

    #[error(
        "commutator target is infeasible: |K| = {magnitude:e} at ({row}, {col}) in the eigenbasis"
    )]
    InfeasibleK {
        row: usize,
        col: usize,
        magnitude: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
