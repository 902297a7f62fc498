use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid setting: {0}")]
    InvalidSetting(String),
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("matrix is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not unitary (defect {0:.3e})")]
    NotUnitary(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state is not normalized (norm {0:.12})")]
    NotNormalized(f64),
    #[error("occupation vector is not in decreasing order at position {0}")]
    NotDecreasing(usize),
    #[error("degenerate spectrum (gap {gap:.3e} below tolerance {tol:.3e})")]
    Degenerate { gap: f64, tol: f64 },
    #[error("invalid collective Pauli parameters r={r}, s={s} for N={n}, d={d}")]
    InvalidActiveSpace { r: usize, s: usize, n: usize, d: usize },
    #[error("constraint file schema violation: {0}")]
    Schema(String),
    #[error("non-integer coefficient {value} in constraint {constraint}")]
    NonInteger { constraint: usize, value: f64 },
    #[error("constraint {constraint} has {got} coefficients but the setting has d = {expected}")]
    LengthMismatch { constraint: usize, expected: usize, got: usize },
    #[error("expansion residual weight {0:.3e} outside the eight determinant configurations")]
    ResidualWeight(f64),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("ground state is degenerate (gap {0:.3e})")]
    DegenerateGround(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
