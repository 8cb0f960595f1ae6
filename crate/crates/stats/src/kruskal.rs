use crate::mann_whitney::clamp_unit;
use crate::rank::{pool_groups, RankedPool};
use crate::special::chi_square_sf;
use crate::{Method, Result, Scalar, Sidedness, StatsError, TestResult};

/// Kruskal-Wallis H test with tie correction.
///
/// `H = [12 / (N(N+1)) * sum_i n_i (mean_rank_i - (N+1)/2)^2] / C`,
/// `C = 1 - sum(t^3 - t) / (N^3 - N)`, p from chi-square with `k - 1`
/// degrees of freedom. If every pooled value is identical the statistic is
/// undefined: the result is degenerate with `statistic = 0` and `p = 1`.
pub fn kruskal_wallis<T: Scalar>(groups: &[&[T]]) -> Result<TestResult<T>> {
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
    let sizes: Vec<usize> = groups.iter().map(|g| g.len()).collect();

    let mut result = TestResult {
        method: Method::KruskalWallis,
        statistic: T::zero(),
        p_value: T::one(),
        degenerate: false,
        n: sizes,
        sidedness: Sidedness::TwoSided,
    };
    if pool.all_tied() {
        result.degenerate = true;
        return Ok(result);
    }

    let big_n = T::from_count(pool.len());
    let centre = (big_n + T::one()) / T::lit(2.0);
    let mut between = T::zero();
    for span in &spans {
        let n_i = T::from_count(span.len());
        let rank_sum = pool.ranks[span.clone()]
            .iter()
            .fold(T::zero(), |acc, &r| acc + r);
        let dev = rank_sum / n_i - centre;
        between = between + n_i * dev * dev;
    }
    let h_raw = T::lit(12.0) / (big_n * (big_n + T::one())) * between;
    let correction = T::one() - pool.tie_sum / (big_n * big_n * big_n - big_n);
    let h = h_raw / correction;

    result.statistic = h;
    result.p_value = clamp_unit(chi_square_sf(h, groups.len() - 1));
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{mann_whitney_u_with, MannWhitneyOptions};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn separated_triples() {
        // Ranks 1..6; mean ranks 2 and 5; centre 3.5.
        // H = 12/42 * (3*2.25 + 3*2.25) = 27/7.
        let r = kruskal_wallis::<f64>(&[&[1.0, 2.0, 3.0][..], &[4.0, 5.0, 6.0][..]]).unwrap();
        assert!((r.statistic - 27.0 / 7.0).abs() < 1e-12);
        assert_relative_eq!(
            r.p_value,
            crate::special::chi_square_sf(27.0 / 7.0, 1),
            max_relative = 1e-15
        );
        assert!(!r.degenerate);
    }

    #[test]
    fn constant_pool_is_degenerate() {
        let a = [20.0; 20];
        let b = [20.0; 20];
        let r = kruskal_wallis(&[&a[..], &b[..]]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(
            kruskal_wallis(&[&[1.0][..]]),
            Err(StatsError::TooFewGroups { min: 2, got: 1 })
        );
        assert_eq!(
            kruskal_wallis(&[&[1.0][..], &[][..]]),
            Err(StatsError::EmptyGroup(1))
        );
    }

    #[test]
    fn tie_correction_applied() {
        // Pool [1,1,2,2] in groups ([1,2],[1,2]) -> equal mean ranks, H = 0.
        let r = kruskal_wallis(&[&[1.0, 2.0][..], &[1.0, 2.0][..]]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_relative_eq!(r.p_value, 1.0);
        // Direct: pool [1,1,1,2,3]; ranks 2,2,2,4,5; groups ([1,1],[1,2,3]):
        // mean ranks 2 and 11/3; centre 3. between = 2*1 + 3*(2/3)^2 = 10/3.
        // raw = 12/30 * 10/3 = 4/3; C = 1 - 24/120 = 0.8; H = 5/3.
        let r = kruskal_wallis(&[&[1.0, 1.0][..], &[1.0, 2.0, 3.0][..]]).unwrap();
        assert_relative_eq!(r.statistic, 5.0 / 3.0, max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn two_group_matches_mann_whitney(a in prop::collection::vec(0u8..8, 1..25), b in prop::collection::vec(0u8..8, 1..25)) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let kw = kruskal_wallis(&[&a[..], &b[..]]).unwrap();
            let mw = mann_whitney_u_with(&a, &b, MannWhitneyOptions { sidedness: Sidedness::TwoSided, continuity_correction: false }).unwrap();
            prop_assert!((kw.p_value - mw.p_value).abs() < 1e-9);
        }

        #[test]
        fn h_nonnegative_and_order_invariant(groups in prop::collection::vec(prop::collection::vec(0u8..10, 1..10), 2..5)) {
            let gs: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|&x| f64::from(x)).collect()).collect();
            let refs: Vec<&[f64]> = gs.iter().map(|g| g.as_slice()).collect();
            let r = kruskal_wallis(&refs).unwrap();
            prop_assert!(r.statistic >= 0.0);
            let rev: Vec<&[f64]> = refs.iter().rev().copied().collect();
            let r2 = kruskal_wallis(&rev).unwrap();
            prop_assert!((r.statistic - r2.statistic).abs() <= 1e-12 * r.statistic.max(1.0));
        }
    }
}
