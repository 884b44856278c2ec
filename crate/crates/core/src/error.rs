use thiserror::Error;

pub type Result<T> = std::result::Result<T, PamError>;

#[derive(Debug, Error)]
pub enum PamError {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("grids are not aligned: {0}")]
    Misaligned(String),

    #[error("point {point:?} lies outside the box")]
    OutsideBox { point: Vec<f64> },

    #[error("eigensolver did not converge after {iterations} iterations (best residuals {residuals:?})")]
    EigenNotConverged {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("spectral truncation insufficient: discarded-mode bound {bound:.3e} exceeds {allowed:.3e}; increase K")]
    Truncation { bound: f64, allowed: f64 },

    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:.3e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("resolvent iteration failed to contract up to eta = {eta}; ratio trace {ratios:?}")]
    ResolventNotContracting { eta: f64, ratios: Vec<f64> },

    #[error("time step {dt} too large: stability bound is {bound}")]
    TimeStep { dt: f64, bound: f64 },

    #[error("duplicate seed label path {0:?}")]
    DuplicateLabel(Vec<u64>),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PamError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        PamError::Parameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> PamError {
    PamError::param(name, reason)
}
