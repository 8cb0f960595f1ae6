//! Rank-based nonparametric hypothesis tests.
//!
//! Every test is generic over the floating-point scalar ([`Scalar`]) so the
//! same code runs in `f32` and `f64`. The `*64` / `*32` aliases at the crate
//! root pin the common instantiations.
//!
//! Included:
//!
//! * [`rank_with_ties`] midranks shared by every rank test,
//! * [`mann_whitney_u`] (normal approximation, tie-corrected variance,
//!   optional continuity correction) and its exact enumeration oracle
//!   [`mann_whitney_exact`],
//! * [`kruskal_wallis`] with tie correction and a chi-square p-value,
//! * [`dunn_posthoc`] pairwise z tests with Bonferroni/Holm adjustment,
//! * [`shapiro_wilk`] following Royston's AS R94 approximation,
//! * [`verify`] seeded self-check suites comparing the asymptotic paths
//!   against their oracles.
//!
//! Degenerate inputs (all pooled values equal, zero-variance samples) never
//! raise an error; they produce a [`TestResult`] with `degenerate = true`
//! and fixed conventions documented on each function.

mod dunn;
mod error;
mod kruskal;
mod mann_whitney;
mod rank;
mod result;
mod scalar;
mod shapiro;
pub mod special;
pub mod verify;

pub use dunn::{adjust_p_values, dunn_posthoc, DunnPair, PAdjust};
pub use error::StatsError;
pub use kruskal::kruskal_wallis;
pub use mann_whitney::{
    mann_whitney_exact, mann_whitney_u, mann_whitney_u_with, u_statistic, MannWhitneyOptions,
    EXACT_MAX_POOLED,
};
pub use rank::{rank_with_ties, tie_correction_sum, RankedPool};
pub use result::{Method, Sidedness, TestResult};
pub use scalar::Scalar;
pub use shapiro::{shapiro_wilk, SHAPIRO_WILK_MAX_N};

pub type Result<T> = std::result::Result<T, StatsError>;

pub type TestResult64 = TestResult<f64>;
pub type TestResult32 = TestResult<f32>;
pub type DunnPair64 = DunnPair<f64>;
pub type DunnPair32 = DunnPair<f32>;
