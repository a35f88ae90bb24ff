use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows} x {cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("adjacency is not symmetric at ({0}, {1})")]
    AsymmetricAdjacency(usize, usize),

    #[error("negative edge weight {weight} at ({row}, {col})")]
    NegativeWeight { row: usize, col: usize, weight: f64 },

    #[error("self-loop at node {0}")]
    SelfLoop(usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("node {0} has zero degree; the normalized Laplacian is undefined")]
    ZeroDegree(usize),

    #[error("{what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("matrix is not symmetric (max deviation {0:e})")]
    NotSymmetric(f64),

    #[error("symmetric eigensolver did not converge")]
    NoConvergence,

    #[error("spectral basis failed validation: {0}")]
    InvalidBasis(String),

    #[error("largest eigenvalue is zero; ratio-based filter designs are undefined")]
    ZeroLambdaMax,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot parse filter design `{text}`: {reason}")]
    DesignParse { text: String, reason: String },

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("loss mask selects no entries")]
    EmptyMask,

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
