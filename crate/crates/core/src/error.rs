use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A state or action became NaN/inf during a rollout.
    #[error("numerical failure at step {step}: non-finite {quantity}")]
    NumericalFailure { step: usize, quantity: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    /// Fewer points in the dataset than the neighbour order K.
    #[error("insufficient data: dataset has {have} states but K = {need}")]
    InsufficientData { have: usize, need: usize },

    #[error(
        "infeasible calibration: m = {m} exceeds N_cal = {n_cal} at alpha = {alpha}; \
         collect more calibration episodes (raise M_cal) or raise alpha"
    )]
    InfeasibleCalibration { m: usize, n_cal: usize, alpha: f64 },

    #[error("training iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }
}
