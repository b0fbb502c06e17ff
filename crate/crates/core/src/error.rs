use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("integral diverges: {0}")]
    Divergence(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("state blew up at t = {last_finite_time}: {detail}")]
    BlowUp { last_finite_time: f64, detail: String },
    #[error("ill-conditioned system (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
