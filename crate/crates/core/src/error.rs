use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model parameter: {0}")]
    InvalidParams(String),

    #[error("state outside the domain x <= x_bar (x = {x}, x_bar = {x_bar})")]
    InvalidState { x: f64, x_bar: f64 },

    #[error("scale functions are defined on [0, inf); got argument {0}")]
    NegativeArgument(f64),

    #[error("argument must be strictly positive; got {0}")]
    NonPositiveArgument(f64),

    #[error("state violates the geometry of the {component} component: {reason}")]
    Geometry {
        component: &'static str,
        reason: String,
    },

    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidMcConfig(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}
