use std::cmp::Ordering;

use crate::{Result, Scalar, StatsError};

/// Midranks of `values` (1-based). Tied values share the mean of the ranks
/// they would occupy.
pub fn rank_with_ties<T: Scalar>(values: &[T]) -> Result<Vec<T>> {
    Ok(RankedPool::new(values)?.ranks)
}

/// `sum(t^3 - t)` over the tie groups of `values`.
pub fn tie_correction_sum<T: Scalar>(values: &[T]) -> Result<T> {
    Ok(RankedPool::new(values)?.tie_sum)
}

/// Pooled observations ranked once, shared by the multi-group tests.
#[derive(Debug, Clone)]
pub struct RankedPool<T> {
    pub ranks: Vec<T>,
    /// `sum(t^3 - t)` over tie groups.
    pub tie_sum: T,
    /// Tie-group sizes in ascending value order.
    pub tie_sizes: Vec<usize>,
}

impl<T: Scalar> RankedPool<T> {
    pub fn new(values: &[T]) -> Result<Self> {
        if values.is_empty() {
            return Err(StatsError::EmptySample);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite(i));
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));

        let mut ranks = vec![T::zero(); values.len()];
        let mut tie_sum = T::zero();
        let mut tie_sizes = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let mut end = start + 1;
            while end < order.len() && values[order[end]] == values[order[start]] {
                end += 1;
            }
            // positions start..end hold ranks start+1..=end
            let midrank = T::from_count(start + 1 + end) / T::lit(2.0);
            for &idx in &order[start..end] {
                ranks[idx] = midrank;
            }
            let t = end - start;
            if t > 1 {
                let t = T::from_count(t);
                tie_sum = tie_sum + t * t * t - t;
            }
            tie_sizes.push(end - start);
            start = end;
        }
        Ok(Self {
            ranks,
            tie_sum,
            tie_sizes,
        })
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// True when every pooled value is identical.
    pub fn all_tied(&self) -> bool {
        self.tie_sizes.len() == 1
    }
}

/// Concatenates groups, returning the pooled values and each group's range.
pub(crate) fn pool_groups<T: Scalar>(groups: &[&[T]]) -> (Vec<T>, Vec<std::ops::Range<usize>>) {
    let mut pooled = Vec::with_capacity(groups.iter().map(|g| g.len()).sum());
    let mut spans = Vec::with_capacity(groups.len());
    for g in groups {
        let start = pooled.len();
        pooled.extend_from_slice(g);
        spans.push(start..pooled.len());
    }
    (pooled, spans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranks_without_ties() {
        assert_eq!(
            rank_with_ties(&[10.0, 20.0, 30.0]).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        assert_eq!(
            rank_with_ties(&[30.0, 10.0, 20.0]).unwrap(),
            vec![3.0, 1.0, 2.0]
        );
    }

    #[test]
    fn ties_share_midrank() {
        assert_eq!(
            rank_with_ties(&[5.0, 5.0, 7.0]).unwrap(),
            vec![1.5, 1.5, 3.0]
        );
        assert_eq!(rank_with_ties(&[2.0, 2.0, 2.0, 2.0]).unwrap(), vec![2.5; 4]);
    }

    #[test]
    fn tie_sum_counts_groups() {
        // groups of 2 and 3: (8-2) + (27-3) = 30
        let v = [1.0, 1.0, 4.0, 4.0, 4.0, 9.0];
        assert_eq!(tie_correction_sum(&v).unwrap(), 30.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(rank_with_ties::<f64>(&[]), Err(StatsError::EmptySample));
        assert_eq!(
            rank_with_ties(&[1.0, f64::NAN]),
            Err(StatsError::NonFinite(1))
        );
        assert_eq!(
            rank_with_ties(&[f64::INFINITY]),
            Err(StatsError::NonFinite(0))
        );
    }

    proptest! {
        #[test]
        fn rank_sum_identity(values in prop::collection::vec(-5i32..5, 1..60)) {
            let v: Vec<f64> = values.iter().map(|&x| f64::from(x)).collect();
            let n = v.len() as f64;
            let sum: f64 = rank_with_ties(&v).unwrap().iter().sum();
            prop_assert_eq!(sum, n * (n + 1.0) / 2.0);
        }
    }
}
