use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("at least {min} groups are required, got {got}")]
    TooFewGroups { min: usize, got: usize },
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("exact enumeration supports at most {max} pooled observations, got {got}")]
    ExactTooLarge { max: usize, got: usize },
    #[error("sample size {n} is outside the supported range {min}..={max}")]
    SampleSize { n: usize, min: usize, max: usize },
}
