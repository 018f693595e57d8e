use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("system size N={n_sites} exceeds the memory cap N<={cap}")]
    TooLarge { n_sites: usize, cap: usize },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("engine mismatch: {0}")]
    EngineMismatch(String),

    #[error("resonance: squared gap {0:e} too small for a finite angle derivative")]
    Resonance(f64),

    #[error("no sign change of the decision function in [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("spread bound diverges: ensemble IQR is zero")]
    UnresolvableSpread,

    #[error("concentration bound diverges: representative kernel value is zero")]
    ConcentratedKernel,

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("singular Jacobian in least-squares fit")]
    SingularJacobian,

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("stage {stage} failed ({context}): {source}")]
    Stage {
        stage: &'static str,
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by user input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_config_error();
        }
        matches!(
            self,
            Error::InvalidParams(_)
                | Error::Config(_)
                | Error::EngineMismatch(_)
                | Error::Format(_)
                | Error::Json(_)
                | Error::Csv(_)
                | Error::TooLarge { .. }
        )
    }
}

pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            context: context(),
            source: Box::new(e),
        })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
