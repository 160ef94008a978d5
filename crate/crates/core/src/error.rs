use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: String,
        got: String,
    },

    #[error("influence matrix not full row rank (rank {rank}, rows {rows})")]
    InfluenceRankDeficient { rank: usize, rows: usize },

    #[error("C̄ not full row rank (check W, N): rank {rank}, rows {rows}")]
    CbarRankDeficient { rank: usize, rows: usize },

    #[error("invalid kernel basis: {0}")]
    InvalidKernelBasis(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("global mode requires stable plant (spectral abscissa of A_p is {0:.6})")]
    PlantNotHurwitz(f64),

    #[error("synthesis infeasible: {0}")]
    Infeasible(String),

    #[error("SDP solver failure: {0}")]
    Solver(String),

    #[error("near-singular {what}: condition number {cond:.3e} exceeds {limit:.1e}")]
    Singular { what: String, cond: f64, limit: f64 },

    #[error("divergence at t={0}")]
    Divergence(f64),

    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("missing field: {0}")]
    MissingField(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach the name of the pipeline stage that failed.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn dim(context: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
