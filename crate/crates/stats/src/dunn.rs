use serde::{Deserialize, Serialize};

use crate::mann_whitney::clamp_unit;
use crate::rank::{pool_groups, RankedPool};
use crate::special::normal_sf;
use crate::{Method, Result, Scalar, Sidedness, StatsError, TestResult};

/// Family-wise p-value adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PAdjust {
    None,
    Bonferroni,
    #[default]
    Holm,
}

/// One pairwise comparison from [`dunn_posthoc`].
///
/// `result.statistic` is z for `first` vs `second` and `result.p_value` is
/// the adjusted two-sided p; the unadjusted value is kept in `raw_p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DunnPair<T> {
    pub first: usize,
    pub second: usize,
    pub raw_p: T,
    pub result: TestResult<T>,
}

/// Dunn's pairwise post-test on pooled midranks.
///
/// For each unordered pair `(i, j)` with `i < j`:
/// `z = (mean_rank_i - mean_rank_j) / sqrt(S2 * (1/n_i + 1/n_j))` with
/// `S2 = N(N+1)/12 - sum(t^3 - t) / (12(N-1))`. Two-sided p-values are then
/// adjusted across all pairs. When every pooled value is tied, `S2 = 0`;
/// each pair is then degenerate with `z = 0` and `p = 1`.
pub fn dunn_posthoc<T: Scalar>(groups: &[&[T]], adjustment: PAdjust) -> Result<Vec<DunnPair<T>>> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups {
            min: 2,
            got: groups.len(),
        });
    }
    if let Some(i) = groups.iter().position(|g| g.is_empty()) {
        return Err(StatsError::EmptyGroup(i));
    }
    let (pooled, spans) = pool_groups(groups);
    let pool = RankedPool::new(&pooled)?;
    let big_n = T::from_count(pool.len());
    let s2 = big_n * (big_n + T::one()) / T::lit(12.0)
        - pool.tie_sum / (T::lit(12.0) * (big_n - T::one()));
    let degenerate = pool.all_tied();

    let mean_ranks: Vec<T> = spans
        .iter()
        .map(|s| {
            pool.ranks[s.clone()].iter().fold(T::zero(), |a, &r| a + r) / T::from_count(s.len())
        })
        .collect();

    let mut pairs = Vec::new();
    for i in 0..groups.len() {
        for j in (i + 1)..groups.len() {
            let (z, p) = if degenerate {
                (T::zero(), T::one())
            } else {
                let se = (s2
                    * (T::from_count(groups[i].len()).recip()
                        + T::from_count(groups[j].len()).recip()))
                .sqrt();
                let z = (mean_ranks[i] - mean_ranks[j]) / se;
                (z, clamp_unit(T::lit(2.0) * normal_sf(z.abs())))
            };
            pairs.push(DunnPair {
                first: i,
                second: j,
                raw_p: p,
                result: TestResult {
                    method: Method::DunnPair,
                    statistic: z,
                    p_value: p,
                    degenerate,
                    n: vec![groups[i].len(), groups[j].len()],
                    sidedness: Sidedness::TwoSided,
                },
            });
        }
    }

    let raw: Vec<T> = pairs.iter().map(|p| p.raw_p).collect();
    for (pair, adj) in pairs.iter_mut().zip(adjust_p_values(&raw, adjustment)) {
        pair.result.p_value = adj;
    }
    Ok(pairs)
}

/// Adjusts a family of p-values. Holm's step-down enforces monotonicity over
/// the sorted sequence; every adjusted value is capped at 1.
pub fn adjust_p_values<T: Scalar>(raw: &[T], adjustment: PAdjust) -> Vec<T> {
    let m = T::from_count(raw.len());
    match adjustment {
        PAdjust::None => raw.to_vec(),
        PAdjust::Bonferroni => raw.iter().map(|&p| (p * m).min(T::one())).collect(),
        PAdjust::Holm => {
            let mut order: Vec<usize> = (0..raw.len()).collect();
            order.sort_by(|&a, &b| {
                raw[a]
                    .partial_cmp(&raw[b])
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let mut adjusted = vec![T::zero(); raw.len()];
            let mut running = T::zero();
            for (rank, &idx) in order.iter().enumerate() {
                let factor = m - T::from_count(rank);
                running = running.max((raw[idx] * factor).min(T::one()));
                adjusted[idx] = running;
            }
            adjusted
        }
    }
}
