use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("time {t} outside the coefficient window [{t0}, {t1}]")]
    TimeOutOfWindow { t: f64, t0: f64, t1: f64 },
    #[error("time grid must be strictly increasing with at least {min} knots")]
    BadTimeGrid { min: usize },
    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),
    #[error("{0} is not symmetric")]
    Asymmetric(&'static str),
    #[error("state is not normalizable (Im Q must be positive definite)")]
    NotNormalizable,
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("caustic: det(L3 Q0 + L4) vanished at t = {t}")]
    Caustic { t: f64 },
    #[error("determinant phase advanced by {advance} rad in one step at t = {t}; refine the time grid")]
    BranchStep { t: f64, advance: f64 },
    #[error("degree overflow: symbol degree {degree} exceeds configured maximum {max}")]
    DegreeOverflow { degree: usize, max: usize },
    #[error("operator annihilates initial data")]
    Annihilated,
    #[error("inadmissible symbol: {0}")]
    InadmissibleSymbol(String),
    #[error("frame conjugation left the admissible symbol class: {0}")]
    FrameConjugation(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("grid solver restriction: unsupported model block {0}")]
    UnsupportedBlock(String),
    #[error("boundary leakage: {fraction:e} of the mass sits in the outer 5% of the domain")]
    Leakage { fraction: f64 },
    #[error("dt too large: dt * max|potential| / hbar = {phase} exceeds pi/4")]
    TimeStepTooLarge { phase: f64 },
    #[error("residual check needs at least 3 snapshots, got {0}")]
    TooFewSnapshots(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("direct nonlocal quadrature is limited to {max} points per axis, got {found}")]
    QuadratureTooLarge { max: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
