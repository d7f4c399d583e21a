use thiserror::Error;

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("wavelength {wavelength_um:.4} µm outside supported band [{lo} µm, {hi} µm]")]
    OutOfBand { wavelength_um: f64, lo: f64, hi: f64 },

    #[error("propagation direction must be a unit vector (|s| = {norm})")]
    NonUnitDirection { norm: f64 },

    #[error("no physical idler: signal wavelength {signal_m:e} m must exceed pump wavelength {pump_m:e} m")]
    NoIdler { pump_m: f64, signal_m: f64 },

    #[error("not phasematchable: {0}")]
    NotPhasematchable(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("frame mismatch: expected {expected}, found {found}")]
    FrameMismatch { expected: &'static str, found: &'static str },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("work estimate {estimate:.3e} triples exceeds budget {budget:.3e} (override to run anyway)")]
    BudgetExceeded { estimate: f64, budget: f64 },

    #[error("checkpoint fingerprint does not match this job")]
    FingerprintMismatch,

    #[error("total internal reflection: {0}")]
    TotalInternalReflection(String),

    #[error("peak lies on the grid boundary")]
    PeakOnBoundary,

    #[error("invalid format: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// Whether this error describes a physical infeasibility rather than bad input.
    pub fn is_physics(&self) -> bool {
        matches!(
            self,
            SimError::NotPhasematchable(_) | SimError::TotalInternalReflection(_)
        )
    }
}
