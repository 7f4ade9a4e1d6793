use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration value violates its documented invariant. `path` is the
    /// dotted field path, e.g. `model.rows`.
    #[error("invalid value for {path}: {reason}")]
    InvalidConfig { path: String, reason: String },

    #[error("state has {got} components, lattice expects {expected}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("degenerate chord {chord:e} between neighbor spins")]
    DegenerateChord { chord: f64 },

    #[error("non-finite value at t = {t}")]
    NonFinite { t: f64 },

    #[error("step size underflow at t = {t} (h = {h:e}, error = {error:e})")]
    StepUnderflow { t: f64, h: f64, error: f64 },

    #[error("trial {trial} at angle index {angle} failed: {source}")]
    Trial {
        angle: usize,
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("fit window has {0} usable points, need at least 3")]
    EmptyFitWindow(usize),

    #[error("every sample in the fit window is past saturation")]
    Saturated,

    #[error("every trial in the sweep ended unsettled")]
    AllUnsettled,

    #[error("initial perturbation must be positive and finite")]
    ZeroPerturbation,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(path: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        path: path.to_string(),
        reason: reason.into(),
    }
}
