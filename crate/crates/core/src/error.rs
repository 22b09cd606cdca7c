use thiserror::Error;

#[derive(Debug, Error)]
pub enum GateError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dressed frame undefined: {0}")]
    FrameUndefined(String),

    #[error("step size underflow at t = {t:e} s (h = {step:e} s, worst scaled local error {worst_error:e})")]
    StepUnderflow { t: f64, step: f64, worst_error: f64 },

    #[error("density operator eigenvalue {value:e} below {threshold:e}; tighten tolerances or raise the Fock cutoff")]
    NegativeEigenvalue { value: f64, threshold: f64 },

    #[error("segment {index}: {source}")]
    Segment {
        index: usize,
        #[source]
        source: Box<GateError>,
    },

    #[error("calibration failed: best fidelity {fidelity} below {required}")]
    CalibrationFailed { fidelity: f64, required: f64 },

    #[error("root finding failed: {0}")]
    RootNotBracketed(String),

    #[error("histogram is not identifiable: {0}")]
    NonIdentifiable(String),

    #[error("fit is ill-conditioned: {0}")]
    IllConditioned(String),
}

pub type Result<T, E = GateError> = std::result::Result<T, E>;

impl GateError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        GateError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn in_segment(self, index: usize) -> Self {
        GateError::Segment {
            index,
            source: Box::new(self),
        }
    }

    /// True for failures of the numerical machinery, as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            GateError::InvalidParameter { .. } | GateError::InvalidState(_) => false,
            GateError::Segment { source, .. } => source.is_numerical(),
            _ => true,
        }
    }
}
