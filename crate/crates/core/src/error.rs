use thiserror::Error;

/// Errors raised across the simulator, analytic evaluators and MDP solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("generator must be square with at least 2 states (got {rows} rows, row {bad_row} has {cols} entries)")]
    NotSquare { rows: usize, bad_row: usize, cols: usize },
    #[error("generator entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("negative off-diagonal rate {value} at ({row}, {col})")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, expected 0")]
    RowSumNonzero { row: usize, sum: f64 },
    #[error("generator is reducible: state {state} does not communicate with state 0")]
    Reducible { state: usize },
    #[error("stationary system is singular")]
    SingularSystem,
    #[error("invalid time {0}: must be finite and non-negative")]
    InvalidTime(f64),
    #[error("invalid horizon {0}: must be finite and positive")]
    InvalidHorizon(f64),
    #[error("invalid rate {0}: must be finite and positive")]
    InvalidRate(f64),
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("expected {expected} weights, got {got}")]
    WeightLengthMismatch { expected: usize, got: usize },
    #[error("weight {index} is {value}; weights must be finite and non-negative")]
    NegativeWeight { index: usize, value: f64 },
    #[error("system {system} has {states} states but {labels} labels")]
    LabelLengthMismatch { system: usize, states: usize, labels: usize },
    #[error("cost function {got} is not valid here (expected {expected})")]
    WrongCostKind { expected: &'static str, got: String },
    #[error("unknown distance `{0}`")]
    UnknownDistance(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("trace is empty")]
    EmptyTrace,
    #[error("trace covers [0, {covered}] but horizon {requested} was requested")]
    TraceTooShort { covered: f64, requested: f64 },
    #[error("policy is incompatible with scenario: {0}")]
    PolicyMismatch(String),
    #[error("MDP formulation requires a zero synchronization delay (got {0})")]
    DeltaNotZero(f64),
    #[error("MDP state space exceeds {cap} states")]
    StateSpaceTooLarge { cap: usize },
    #[error("state {0} is not in the solution's state space")]
    UnknownState(String),
    #[error("relative value iteration did not converge in {iterations} iterations (span {span})")]
    NoConvergence { iterations: usize, span: f64 },
    #[error("induced chain did not converge to a stationary distribution")]
    PeriodicOrReducibleChain,
    #[error("replication count {0} is too small")]
    TooFewReplications(u64),
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("config field `{field}`: {reason}")]
    SchemaViolation { field: String, reason: String },
}

impl Error {
    /// True for solver and linear-algebra failures, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem | Error::NoConvergence { .. } | Error::PeriodicOrReducibleChain
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
