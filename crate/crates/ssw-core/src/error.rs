use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("grid: {0}")]
    Grid(String),
    #[error("constants: {0}")]
    Constants(String),
    #[error("tolerances: {0}")]
    Tolerances(String),
    #[error("field spec: {0}")]
    FieldSpec(String),
    #[error("tabulated data: {0}")]
    Tabulated(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("eigensolver: {0}")]
    Eigensolver(String),
    #[error("non-diagonalizable near exceptional point: {0}")]
    ExceptionalPoint(String),
    #[error("conjugate pairing: {0}")]
    Pairing(String),
    #[error("unclassifiable spectrum: {0}")]
    Unclassifiable(String),
    #[error("bracket does not straddle the transition: {0}")]
    Bracket(String),
    #[error("density requested for a non-bound state: {0}")]
    NotBound(String),
    #[error("fit window too short: {0}")]
    WindowTooShort(String),
    #[error("evolution parameters: {0}")]
    Evolution(String),
    #[error("time step instability: {0}")]
    DtInstability(String),
    #[error("linear solve: {0}")]
    LinearSolve(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
