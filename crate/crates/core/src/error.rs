use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not symmetric (residual {residual:.3e})")]
    NotSymmetric { residual: f64 },
    #[error("matrix is not Hurwitz")]
    NotHurwitz,
    #[error("linear system is singular")]
    Singular,
    #[error("pair is not observable (rank {rank} < {n})")]
    Unobservable { rank: usize, n: usize },
    #[error("pair is not controllable (rank {rank} < {n})")]
    Uncontrollable { rank: usize, n: usize },
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("schema error: {0}")]
    Schema(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
