use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] fscreen::Error),
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(
        "gave up after {attempts} datasets with {screened} of {target} screened; \
         the configured screen rate alpha0 = {alpha0} is too low for this target"
    )]
    AttemptCap { attempts: usize, screened: usize, target: usize, alpha0: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SimError {
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::Core(e) => e.kind(),
            SimError::Config(_) => "Config",
            SimError::AttemptCap { .. } => "AttemptCap",
            SimError::Io(_) => "Io",
            SimError::Csv(_) => "Csv",
            SimError::Json(_) => "Json",
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
