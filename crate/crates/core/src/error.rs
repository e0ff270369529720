use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: expected (L = {}, N = {}), found (L = {}, N = {})", .expected.0, .expected.1, .found.0, .found.1)]
    GridMismatch { expected: (f64, usize), found: (f64, usize) },

    #[error("expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("soliton iteration diverged at iteration {iteration} (residual {residual:e}, best {best:e}): {reason}")]
    Diverged { iteration: usize, residual: f64, best: f64, reason: String },

    #[error("potential has negative samples (min {0:e}); the soliton is not converged")]
    NegativeSoliton(f64),

    #[error("operator failed the symmetry probe: |<Kf,g> - <f,Kg>| = {defect:e}")]
    NotSymmetric { defect: f64 },

    #[error("no sign change of lambda5 - 1 on [{lo}, {hi}]: values {f_lo}, {f_hi}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("soliton not converged for beta = {beta}: residual {residual:e}")]
    SolitonNotConverged { beta: f64, residual: f64 },

    #[error("field format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
