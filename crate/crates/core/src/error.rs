use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("degenerate leading transfer eigenvalue: {0}")]
    DegenerateFixedPoint(String),

    #[error("rank-deficient fixed point (smallest eigenvalue {min_eig:.3e}, condition number {cond:.3e})")]
    RankDeficient { min_eig: f64, cond: f64 },

    #[error("operator is not hermitian: relative defect {0:.3e}")]
    NotHermitian(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sector invariant violated: {0}")]
    SectorInvariant(String),

    #[error("inner solve failed in {term}: {source}")]
    InnerSolve {
        term: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("momentum grid does not contain {0}")]
    MissingMomentum(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn in_term(self, term: &'static str) -> Error {
        Error::InnerSolve {
            term,
            source: Box::new(self),
        }
    }
}
