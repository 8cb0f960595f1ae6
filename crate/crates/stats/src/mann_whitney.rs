use crate::rank::RankedPool;
use crate::special::{normal_cdf, normal_sf};
use crate::{Method, Result, Scalar, Sidedness, StatsError, TestResult};

/// Largest pooled sample size [`mann_whitney_exact`] will enumerate.
pub const EXACT_MAX_POOLED: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MannWhitneyOptions {
    pub sidedness: Sidedness,
    /// Shift |U - mean| by 0.5 toward the mean before the normal approximation.
    pub continuity_correction: bool,
}

impl Default for MannWhitneyOptions {
    fn default() -> Self {
        Self {
            sidedness: Sidedness::TwoSided,
            continuity_correction: true,
        }
    }
}

/// U1 by direct pair counting: 1 for every `x > y`, 0.5 for every tie.
pub fn u_statistic<T: Scalar>(sample1: &[T], sample2: &[T]) -> T {
    let half = T::lit(0.5);
    let mut u = T::zero();
    for &x in sample1 {
        for &y in sample2 {
            if x > y {
                u = u + T::one();
            } else if x == y {
                u = u + half;
            }
        }
    }
    u
}

/// Mann-Whitney U test with the normal approximation, tie-corrected variance
/// and a 0.5 continuity correction.
///
/// The statistic is U1 (the count of pairs where sample 1 wins, ties
/// counting one half). When every pooled value is identical the result is
/// degenerate with `U1 = n1*n2/2` and `p = 1`.
pub fn mann_whitney_u<T: Scalar>(
    sample1: &[T],
    sample2: &[T],
    sidedness: Sidedness,
) -> Result<TestResult<T>> {
    mann_whitney_u_with(
        sample1,
        sample2,
        MannWhitneyOptions {
            sidedness,
            continuity_correction: true,
        },
    )
}

pub fn mann_whitney_u_with<T: Scalar>(
    sample1: &[T],
    sample2: &[T],
    options: MannWhitneyOptions,
) -> Result<TestResult<T>> {
    let (pool, n1, n2) = rank_two_samples(sample1, sample2)?;
    let u1 = u_from_ranks(&pool.ranks[..n1], n1);
    let nf1 = T::from_count(n1);
    let nf2 = T::from_count(n2);
    let big_n = nf1 + nf2;
    let mean = nf1 * nf2 / T::lit(2.0);

    let mut result = TestResult {
        method: Method::MannWhitney,
        statistic: u1,
        p_value: T::one(),
        degenerate: false,
        n: vec![n1, n2],
        sidedness: options.sidedness,
    };
    if pool.all_tied() {
        result.statistic = mean;
        result.degenerate = true;
        return Ok(result);
    }

    let variance = nf1 * nf2 / T::lit(12.0)
        * ((big_n + T::one()) - pool.tie_sum / (big_n * (big_n - T::one())));
    let sd = variance.sqrt();
    let cc = if options.continuity_correction {
        T::lit(0.5)
    } else {
        T::zero()
    };
    let p = match options.sidedness {
        Sidedness::TwoSided => {
            let z = ((u1 - mean).abs() - cc) / sd;
            T::lit(2.0) * normal_sf(z)
        }
        Sidedness::Greater => normal_sf((u1 - mean - cc) / sd),
        Sidedness::Less => normal_cdf((u1 - mean + cc) / sd),
    };
    result.p_value = clamp_unit(p);
    Ok(result)
}

/// Exact Mann-Whitney p-value by enumerating every assignment of the pooled
/// values to a first group of size `n1`.
///
/// Ties are handled through the pooled midranks, so the null distribution is
/// the permutation distribution conditional on the observed tie pattern.
/// Two-sided p is `min(1, 2 * min(P(U <= u), P(U >= u)))`.
pub fn mann_whitney_exact<T: Scalar>(
    sample1: &[T],
    sample2: &[T],
    sidedness: Sidedness,
) -> Result<TestResult<T>> {
    let pooled_n = sample1.len() + sample2.len();
    if pooled_n > EXACT_MAX_POOLED {
        return Err(StatsError::ExactTooLarge {
            max: EXACT_MAX_POOLED,
            got: pooled_n,
        });
    }
    let (pool, n1, n2) = rank_two_samples(sample1, sample2)?;

    // Doubled midranks are integers, so the enumeration runs in exact integer arithmetic.
    let doubled: Vec<i64> = pool
        .ranks
        .iter()
        .map(|r| (*r * T::lit(2.0)).round().to_i64().expect("small rank"))
        .collect();
    let offset = (n1 * (n1 + 1)) as i64;
    let observed: i64 = doubled[..n1].iter().sum::<i64>() - offset;

    let mut total = 0u64;
    let mut at_most = 0u64;
    let mut at_least = 0u64;
    for_each_subset(pooled_n, n1, |mask| {
        let mut sum = 0i64;
        let mut m = mask;
        while m != 0 {
            let i = m.trailing_zeros() as usize;
            sum += doubled[i];
            m &= m - 1;
        }
        let u2 = sum - offset;
        total += 1;
        if u2 <= observed {
            at_most += 1;
        }
        if u2 >= observed {
            at_least += 1;
        }
    });

    let total_f = total as f64;
    let p_le = at_most as f64 / total_f;
    let p_ge = at_least as f64 / total_f;
    let p = match sidedness {
        Sidedness::TwoSided => (2.0 * p_le.min(p_ge)).min(1.0),
        Sidedness::Greater => p_ge,
        Sidedness::Less => p_le,
    };
    Ok(TestResult {
        method: Method::MannWhitney,
        statistic: T::from_i64(observed).expect("small") / T::lit(2.0),
        p_value: T::lit(p),
        degenerate: pool.all_tied(),
        n: vec![n1, n2],
        sidedness,
    })
}

fn rank_two_samples<T: Scalar>(
    sample1: &[T],
    sample2: &[T],
) -> Result<(RankedPool<T>, usize, usize)> {
    if sample1.is_empty() || sample2.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut pooled = Vec::with_capacity(sample1.len() + sample2.len());
    pooled.extend_from_slice(sample1);
    pooled.extend_from_slice(sample2);
    Ok((RankedPool::new(&pooled)?, sample1.len(), sample2.len()))
}

fn u_from_ranks<T: Scalar>(ranks1: &[T], n1: usize) -> T {
    let r1 = ranks1.iter().fold(T::zero(), |acc, &r| acc + r);
    let nf = T::from_count(n1);
    r1 - nf * (nf + T::one()) / T::lit(2.0)
}

/// Calls `visit` with every `n`-bit mask having exactly `k` bits set (Gosper's hack).
fn for_each_subset(n: usize, k: usize, mut visit: impl FnMut(u32)) {
    debug_assert!(n <= 31);
    if k == 0 {
        visit(0);
        return;
    }
    let limit = 1u32 << n;
    let mut mask: u32 = (1u32 << k) - 1;
    while mask < limit {
        visit(mask);
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
    }
}

pub(crate) fn clamp_unit<T: Scalar>(p: T) -> T {
    p.max(T::zero()).min(T::one())
}
