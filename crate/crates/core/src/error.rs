use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("excluded value: {0}")]
    Excluded(String),
    #[error("branch error: {0}")]
    Branch(String),
    #[error("not integrable: {what} defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    NonIntegrable { what: String, defect: f64, tol: f64 },
    #[error("verification failed: {what} residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    Residual { what: String, residual: f64, tol: f64 },
    #[error("solution left |t| <= {bound:e} at (u, v) = ({u}, {v})")]
    BlowUp { u: f64, v: f64, bound: f64 },
    #[error("solution left the admissible range at (u, v) = ({u}, {v}): t = {t}")]
    Range { u: f64, v: f64, t: f64 },
    #[error("integration overflow at (u, v) = ({u}, {v})")]
    Overflow { u: f64, v: f64 },
    #[error("mesh is not conformal: {0}")]
    NotConformal(String),
    #[error("signature mismatch: {0}")]
    Signature(String),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("evaluation error at byte {offset}: {message}")]
    Eval { offset: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
