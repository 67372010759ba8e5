use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("operation requires a gradient (potential) field")]
    NotGradient,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("field table violates an invariant: {0}")]
    InvalidField(String),

    #[error("trajectory blew up at t = {time}: state left the ball of radius {limit:e} or became non-finite")]
    BlowUp { time: f64, limit: f64 },

    #[error("ensemble member {index} with initial condition x = {x:?}, v = {v:?} failed: {source}")]
    EnsembleMember {
        index: usize,
        x: Vec<f64>,
        v: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("quadrature did not converge: error estimate {estimate:e} above tolerance {tolerance:e} after {intervals} subintervals")]
    QuadratureFailed {
        estimate: f64,
        tolerance: f64,
        intervals: usize,
    },

    #[error("tail bound {bound:e} exceeds requested tolerance {tolerance:e}; increase z_max")]
    TailTooLarge { bound: f64, tolerance: f64 },

    #[error("potential is not monotone enough: min phi' = {min_slope} < 1/2 at N = {n}")]
    NotMonotone { n: u64, min_slope: f64 },

    #[error("no eta window with |A| >= {threshold} (max |A| on the grid is {max_abs})")]
    NoAdmissibleWindow { threshold: f64, max_abs: f64 },

    #[error("realized eta = {eta} escaped the window [{lo}, {hi}] at N = {n} (v = {v})")]
    EtaEscaped {
        n: u64,
        v: f64,
        eta: f64,
        lo: f64,
        hi: f64,
    },

    #[error("not enough usable rows for a fit: {usable} usable, {required} required ({excluded} excluded)")]
    InsufficientData {
        usable: usize,
        required: usize,
        excluded: usize,
    },

    #[error("root bracketing failed: {0}")]
    Bracket(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True when the failure is a trajectory blow-up, possibly wrapped in an
    /// ensemble-member error.
    pub fn is_blow_up(&self) -> bool {
        match self {
            Error::BlowUp { .. } => true,
            Error::EnsembleMember { source, .. } => source.is_blow_up(),
            _ => false,
        }
    }
}
