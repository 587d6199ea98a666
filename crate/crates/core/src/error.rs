use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid truncation dimension {0}: need at least 2 Fock levels")]
    InvalidDimension(usize),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("truncation unsafe in mode `{mode}`: top-level population {tail:.3e}{}", at.map(|t| format!(" at t = {t}")).unwrap_or_default())]
    TruncationUnsafe { mode: String, tail: f64, at: Option<f64> },

    #[error("cannot normalize a zero vector: {0}")]
    ZeroVector(String),

    #[error("zero-probability jump: Tr(r rho r^dag) = {0:.3e}")]
    ZeroProbabilityJump(f64),

    #[error("step size too coarse: max jump probability per step {prob:.3e} >= {limit}")]
    StepTooCoarse { prob: f64, limit: f64 },

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("integration did not converge: {0}")]
    NotConverged(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no-knowledge feedback inapplicable: channel `{0}` is not Hermitian")]
    NkfInapplicable(String),

    #[error("unknown channel `{0}`")]
    UnknownChannel(String),

    #[error("trajectory seed {seed} stream {stream}: {source}")]
    Trajectory {
        seed: u64,
        stream: u64,
        #[source]
        source: Box<SimError>,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<SimError>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl SimError {
    pub fn context(self, context: impl Into<String>) -> Self {
        SimError::Context { context: context.into(), source: Box::new(self) }
    }
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

impl From<csv::Error> for SimError {
    fn from(e: csv::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for SimError {
    fn from(e: serde_json::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
