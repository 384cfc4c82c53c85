use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A grid function holds a NaN or infinite value.
    #[error("corrupt state: non-finite value at node {node}, component {component}")]
    CorruptState { node: usize, component: usize },

    #[error("non-finite {what}")]
    NonFinite { what: &'static str },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point is not on an inflow face")]
    NotOnInflowFace,

    #[error("time {tau} outside the traced range [{lo}, {hi}]")]
    OutOfRange { tau: f64, lo: f64, hi: f64 },

    #[error("characteristic record is not a boundary hit")]
    NotBoundaryHit,

    /// Inflow speed at a half-line face does not exceed the declared bound.
    #[error("inflow condition violated: normal speed {speed} <= {bound} on face {face}")]
    InflowViolation { face: usize, speed: f64, bound: f64 },

    #[error("model blow-up in coefficients: {what} is not finite at t = {t}")]
    CoefficientBlowUp { what: &'static str, t: f64 },

    /// Slab halving underflowed: the solution could not be continued past
    /// `reached`; the failed attempt aimed at `attempted`.
    #[error("local existence failure: blow-up bracketed in [{reached}, {attempted}]")]
    LocalExistenceFailure { reached: f64, attempted: f64 },

    #[error("the stability estimate needs both problems to share one velocity")]
    DifferentVelocity,

    #[error("invalid model parameters: {0}")]
    InvalidModel(String),
}

impl Error {
    /// Blow-up bracket carried by a local existence failure.
    pub fn blow_up_bracket(&self) -> Option<(f64, f64)> {
        match *self {
            Error::LocalExistenceFailure { reached, attempted } => Some((reached, attempted)),
            _ => None,
        }
    }
}
