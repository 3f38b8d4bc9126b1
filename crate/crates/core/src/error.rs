use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("not an exact rational: {0:?} (use \"a/b\")")]
    Rational(String),
    #[error("invalid reward spec: {0}")]
    Reward(String),
    #[error("invalid policy: {0}")]
    Policy(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("reward argument {arg} outside domain {domain}")]
    Domain { arg: String, domain: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed policy: {0}")]
    Policy(String),
    #[error("oracle horizon {n} exceeds the enumeration bound {max} (2^(2^N-1) rules)")]
    OracleTooLarge { n: usize, max: usize },
    #[error("quadrature did not converge: estimated error {achieved:e} > tolerance {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
