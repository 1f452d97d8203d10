use thiserror::Error;

/// Errors produced by codebook construction, analysis, simulation and planning.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid codebook spec: {0}")]
    InvalidSpec(String),

    #[error("codebook has {size} codewords, more than the enumeration cap of {cap}")]
    SizeExceedsCap { size: u64, cap: u64 },

    #[error("state space of {states} configurations exceeds the cap of {cap}")]
    StateSpaceTooLarge { states: u64, cap: u64 },

    #[error("brute-force enumeration of {outcomes} outcomes exceeds the cap of {cap}")]
    EnumerationTooLarge { outcomes: u128, cap: u128 },

    #[error("lumped model requires uniform per-sub-frame budgets")]
    NotUniform,

    #[error("operation requires {expected} mode")]
    WrongMode { expected: &'static str },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("class budgets sum to {requested}, more than the {total} available preambles")]
    BudgetExceedsTotal { requested: u64, total: u64 },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

pub type Result<T> = std::result::Result<T, Error>;
