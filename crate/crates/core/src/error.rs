use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("element {0} is not active")]
    InactiveElement(usize),
    #[error("no root found: {0}")]
    NoRoot(String),
    #[error("singular evaluation: {0}")]
    Singular(String),
    #[error("Gram matrix of element {element} is not positive definite")]
    GramNotSpd { element: usize },
    #[error("degenerate Jacobian in element {0}")]
    DegenerateJacobian(usize),
    #[error("global matrix is not positive definite: {0}")]
    NotSpd(String),
    #[error("bordered system breakdown: Schur complement {0:e}")]
    BorderBreakdown(f64),
    #[error("inconsistent layout: {0}")]
    Layout(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
