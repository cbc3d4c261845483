use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty frequency sector [{lo}, {hi})")]
    EmptySector { lo: f64, hi: f64 },

    #[error("angle {angle_deg} deg outside [{min}, {max}] deg")]
    AngleOutOfDomain { angle_deg: f64, min: f64, max: f64 },

    #[error("rank deficient: numerical rank {rank}, need at least {needed}")]
    RankDeficient { rank: usize, needed: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("dictionary would hold {atoms} atoms, cap is {cap}")]
    AtomCapExceeded { atoms: usize, cap: usize },

    #[error("refusing to materialise a {rows}x{cols} matrix ({entries} entries, limit {limit})")]
    MemoryGuard {
        rows: usize,
        cols: usize,
        entries: usize,
        limit: usize,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn dims(op: &'static str, detail: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            op,
            detail: detail.into(),
        }
    }

    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
