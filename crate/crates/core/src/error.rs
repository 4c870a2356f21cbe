use thiserror::Error;

/// Errors raised by the shooting, target-map and solver layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid integration controls: {0}")]
    InvalidControls(String),

    #[error("initial value has {len} components but the system has {expected}")]
    DimensionMismatch { len: usize, expected: usize },

    #[error("initial value must be componentwise >= 0, got {0:?}")]
    NegativeInitialValue(Vec<f64>),

    #[error("nonlinearity returned a non-finite value at u = {0:?}")]
    NonFiniteRhs(Vec<f64>),

    #[error("state became non-finite at r = {r}")]
    NonFiniteState { r: f64 },

    #[error("step size underflow at r = {r} (h = {h:e})")]
    StepSizeUnderflow { r: f64, h: f64 },

    #[error("step budget of {steps} steps exhausted at r = {r}")]
    StepBudgetExceeded { r: f64, steps: usize },

    #[error("radius {r} outside trajectory range [{lo}, {hi}]")]
    OutOfRange { r: f64, lo: f64, hi: f64 },

    #[error("point is not on the level set: sum = {sum}, level a = {a}")]
    LevelViolation { sum: f64, a: f64 },

    #[error("target map unresolved at alpha = {alpha:?} (r_max = {r_max})")]
    UndeterminedTarget { alpha: Vec<f64>, r_max: f64 },

    #[error("target map still unresolved after escalating r_max to {r_max} at alpha = {alpha:?}")]
    UnresolvedTarget { alpha: Vec<f64>, r_max: f64 },

    #[error("no completely-labeled cell among the children at depth {depth}")]
    NoCompletelyLabeledCell { depth: usize },

    #[error("depth budget exhausted at depth {depth}")]
    DepthExhausted {
        depth: usize,
        best: Box<crate::simplex_solver::RootCertificate>,
    },

    #[error("no wall hit for alpha = {alpha} (trajectory stayed positive)")]
    NoWallHit { alpha: f64 },

    #[error("trajectory spans less than one decade of radii ({lo} .. {hi})")]
    InsufficientRange { lo: f64, hi: f64 },

    #[error("trajectory ended on the wall; it is not a global candidate")]
    NotGlobal,
}

pub type Result<T> = std::result::Result<T, Error>;
