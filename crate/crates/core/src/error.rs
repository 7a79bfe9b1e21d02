use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("N must be even ≥ 16 (got {0})")]
    InvalidGridSize(usize),

    #[error("grid mismatch: {0} vs {1} nodes")]
    GridMismatch(usize, usize),

    #[error("Fourier index |p| = {p} must be < N/2 = {half}")]
    Aliased { p: i64, half: usize },

    #[error("mass mismatch: field has {field}, expected {expected}")]
    MassMismatch { field: f64, expected: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("contact point τ = {tau} outside admissible range (0, {max})")]
    TauOutOfRange { tau: f64, max: f64 },

    #[error("sitting drops require α>1 (got α = {0})")]
    SittingDropAlpha(f64),

    #[error("resonant sitting drop: |sin(α(π−τ))| = {0:e} too small")]
    Resonant(f64),

    #[error("mass {mass} outside achievable range ({lo}, {hi}) for this branch")]
    MassOutOfRange { mass: f64, lo: f64, hi: f64 },

    #[error("Newton failed to converge at t = {t} with dt = {dt} (dt_min reached)")]
    NonConvergence { t: f64, dt: f64 },

    #[error("positivity lost at t = {t}: min u = {min_u:e}")]
    PositivityLoss { t: f64, min_u: f64 },

    #[error("singular linear system at pivot {0}")]
    Singular(usize),

    #[error("config: {0}")]
    Config(String),

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("rate analysis: {0}")]
    Rates(String),

    #[error("csv parse error at line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
