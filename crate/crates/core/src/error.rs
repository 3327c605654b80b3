use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{what} sums to {sum}, expected 1")]
    NotNormalized { what: String, sum: f64 },
    #[error("reward for state {state}, joint action {action} is not finite")]
    NonFiniteReward { state: usize, action: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("mixing rate {0} outside [0, 1]")]
    MixingRate(f64),
    #[error("policy shape mismatch: {0}")]
    Shape(String),
    #[error("policy row (agent {agent}, t={t}, row {row}) is not a distribution (sum {sum})")]
    NotNormalized {
        agent: usize,
        t: usize,
        row: usize,
        sum: f64,
    },
    #[error("malformed policy document: {0}")]
    Document(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("weights have zero total mass")]
    ZeroMass,
    #[error("weights and values differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("risk parameter must be finite")]
    NonFinite,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("marginal at t={t} sums to {sum}")]
    MarginalDrift { t: usize, sum: f64 },
    #[error("risk parameter {0} is negative")]
    NegativeRisk(f64),
    #[error("episodes must be positive")]
    NoEpisodes,
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// A backup produced a NaN or infinite value.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("non-finite value {value} at t={t}, cell {cell}")]
pub struct NumericError {
    pub t: usize,
    pub cell: usize,
    pub value: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}
