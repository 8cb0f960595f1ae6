use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ShapiroWilk,
    MannWhitney,
    KruskalWallis,
    DunnPair,
}

/// Alternative hypothesis of a two-sample test.
///
/// `Greater` means the first sample tends to be larger than the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    #[default]
    TwoSided,
    Greater,
    Less,
}

/// Outcome of one hypothesis test.
///
/// `statistic` holds W, U1, H or z depending on `method`. When `degenerate`
/// is set the statistic and p-value follow the fixed conventions of the
/// producing function and `p_value` is always within `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult<T> {
    pub method: Method,
    pub statistic: T,
    pub p_value: T,
    pub degenerate: bool,
    pub n: Vec<usize>,
    pub sidedness: Sidedness,
}

impl<T: crate::Scalar> TestResult<T> {
    pub fn is_significant(&self, alpha: T) -> bool {
        !self.degenerate && self.p_value < alpha
    }
}
