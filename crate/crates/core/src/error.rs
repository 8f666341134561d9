use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("spheres are not admissible for a common cone: |c0-c1|^2 = {dist_sq}, (r0-r1)^2 = {radius_diff_sq}")]
    Admissibility { dist_sq: f64, radius_diff_sq: f64 },

    #[error("parameter ({u}, {v}) lies outside the surface domain")]
    OutOfDomain { u: f64, v: f64 },

    #[error("surface is not regular at ({u}, {v})")]
    Irregular { u: f64, v: f64 },

    #[error("umbilic point at ({u}, {v}): kappa1 = {kappa1}, kappa2 = {kappa2}")]
    Umbilic { u: f64, v: f64, kappa1: f64, kappa2: f64 },

    #[error("principal curvatures must be positive at ({u}, {v}): kappa1 = {kappa1}, kappa2 = {kappa2}")]
    CurvatureSign { u: f64, v: f64, kappa1: f64, kappa2: f64 },

    #[error("sphere radius {radius} at ({u}, {v}) is outside (0, {limit})")]
    SingularRadius { u: f64, v: f64, radius: f64, limit: f64 },

    #[error("contact element is L-flat; every direction is conjugate")]
    Flat,

    #[error("streamline tracing failed near ({u}, {v}): {reason}")]
    Tracing { u: f64, v: f64, reason: String },

    #[error("index ({i}, {j}) out of range")]
    IndexOutOfRange { i: usize, j: usize },

    #[error("net is not verified: max contact residual {max_residual:e}, {inadmissible} inadmissible edges")]
    NotVerified { max_residual: f64, inadmissible: usize },

    #[error("linear solve failed: {0}")]
    Factorization(String),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("malformed log: {0}")]
    MalformedLog(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Error {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Re-labels a location-carrying error with the parameter where it happened.
    pub(crate) fn located(self, u: f64, v: f64) -> Error {
        match self {
            Error::Umbilic { kappa1, kappa2, .. } => Error::Umbilic { u, v, kappa1, kappa2 },
            Error::CurvatureSign { kappa1, kappa2, .. } => {
                Error::CurvatureSign { u, v, kappa1, kappa2 }
            }
            Error::SingularRadius { radius, limit, .. } => {
                Error::SingularRadius { u, v, radius, limit }
            }
            Error::Irregular { .. } => Error::Irregular { u, v },
            other => other,
        }
    }
}
