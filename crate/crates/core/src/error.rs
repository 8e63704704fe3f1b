use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate span: vectors are parallel (|<u,v>| = {0})")]
    DegenerateSpan(f64),

    #[error("underpowered check: {0}")]
    Underpowered(String),

    #[error("budget exceeded: {name} = {value:e} exceeds budget {budget:e}")]
    BudgetExceeded {
        name: &'static str,
        value: f64,
        budget: f64,
    },

    #[error("non-finite stochastic gradient at step {step} (norm {norm})")]
    NonFiniteGradient { step: u64, norm: f64 },

    #[error("zero-norm update at step {step}")]
    ZeroNormUpdate { step: u64 },

    #[error("unknown {family} '{name}' (known: {known})")]
    UnknownName {
        family: &'static str,
        name: String,
        known: String,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
