use std::cmp::Ordering;

use crate::mann_whitney::clamp_unit;
use crate::special::{horner, normal_quantile, normal_sf};
use crate::{Method, Result, Scalar, Sidedness, StatsError, TestResult};

/// Largest sample the p-value approximation is calibrated for.
pub const SHAPIRO_WILK_MAX_N: usize = 5000;

// Polynomial coefficients in ascending order.
const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

const SMALL: f64 = 1e-19;

/// Shapiro-Wilk W test for normality using Royston's approximation for the
/// coefficients and the p-value (valid for `3 <= n <= 5000`).
///
/// A constant sample is degenerate: `W = 1`, `p = 1`. Otherwise fewer than
/// three or more than [`SHAPIRO_WILK_MAX_N`] observations is an error.
pub fn shapiro_wilk<T: Scalar>(sample: &[T]) -> Result<TestResult<T>> {
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if let Some(i) = sample.iter().position(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(i));
    }
    let n = sample.len();
    let mut result = TestResult {
        method: Method::ShapiroWilk,
        statistic: T::one(),
        p_value: T::one(),
        degenerate: false,
        n: vec![n],
        sidedness: Sidedness::TwoSided,
    };
    if sample.iter().all(|&v| v == sample[0]) {
        result.degenerate = true;
        return Ok(result);
    }
    if !(3..=SHAPIRO_WILK_MAX_N).contains(&n) {
        return Err(StatsError::SampleSize {
            n,
            min: 3,
            max: SHAPIRO_WILK_MAX_N,
        });
    }

    let mut x = sample.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    // Centring on a middle value keeps the scaled sums well conditioned.
    let shift = x[n / 2];
    for v in &mut x {
        *v = *v - shift;
    }

    let a = coefficients::<T>(n);
    let (w, w1) = statistic(&x, &a);
    result.statistic = w;
    result.p_value = clamp_unit(p_value(n, w, w1));
    Ok(result)
}

/// The `n / 2` positive half of the antisymmetric weight vector.
fn coefficients<T: Scalar>(n: usize) -> Vec<T> {
    let half = n / 2;
    let mut a = vec![T::zero(); half];
    if n == 3 {
        a[0] = T::lit(std::f64::consts::FRAC_1_SQRT_2);
        return a;
    }
    let an = T::from_count(n);
    let an25 = an + T::lit(0.25);
    let mut m = Vec::with_capacity(half);
    let mut summ2 = T::zero();
    for i in 0..half {
        let q = normal_quantile((T::from_count(i + 1) - T::lit(0.375)) / an25);
        summ2 = summ2 + q * q;
        m.push(q);
    }
    summ2 = summ2 * T::lit(2.0);
    let ssumm2 = summ2.sqrt();
    let rsn = an.sqrt().recip();
    let a1 = horner(rsn, &C1) - m[0] / ssumm2;

    let two = T::lit(2.0);
    let (first_free, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + horner(rsn, &C2);
        let num = summ2 - two * m[0] * m[0] - two * m[1] * m[1];
        let den = T::one() - two * a1 * a1 - two * a2 * a2;
        a[1] = a2;
        (2, (num / den).sqrt())
    } else {
        let num = summ2 - two * m[0] * m[0];
        let den = T::one() - two * a1 * a1;
        (1, (num / den).sqrt())
    };
    a[0] = a1;
    for i in first_free..half {
        a[i] = -m[i] / fac;
    }
    a
}

/// Returns `(W, 1 - W)`, the latter computed without cancellation.
fn statistic<T: Scalar>(x: &[T], a: &[T]) -> (T, T) {
    let n = x.len();
    let range = x[n - 1] - x[0];
    let weight = |i: usize| {
        let j = n - 1 - i;
        match i.cmp(&j) {
            Ordering::Less => -a[i],
            Ordering::Greater => a[j],
            Ordering::Equal => T::zero(),
        }
    };
    let count = T::from_count(n);
    let mut sa = T::zero();
    let mut sx = T::zero();
    for (i, &xi) in x.iter().enumerate() {
        sa = sa + weight(i);
        sx = sx + xi / range;
    }
    sa = sa / count;
    sx = sx / count;

    let mut ssa = T::zero();
    let mut ssx = T::zero();
    let mut sax = T::zero();
    for (i, &xi) in x.iter().enumerate() {
        let da = weight(i) - sa;
        let dx = xi / range - sx;
        ssa = ssa + da * da;
        ssx = ssx + dx * dx;
        sax = sax + da * dx;
    }
    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    (T::one() - w1, w1)
}

fn p_value<T: Scalar>(n: usize, w: T, w1: T) -> T {
    let an = T::from_count(n);
    if n == 3 {
        if w < T::lit(0.75) {
            return T::zero();
        }
        let pi6 = T::lit(6.0 / std::f64::consts::PI);
        return T::one() - pi6 * w.sqrt().acos();
    }
    let y = w1.ln();
    if n <= 11 {
        let gamma = horner(an, &G);
        if y >= gamma {
            return T::lit(SMALL);
        }
        let y = -(gamma - y).ln();
        let m = horner(an, &C3);
        let s = horner(an, &C4).exp();
        return normal_sf((y - m) / s);
    }
    let ln_n = an.ln();
    let m = horner(ln_n, &C5);
    let s = horner(ln_n, &C6).exp();
    normal_sf((y - m) / s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn matches_reference_values() {
        for case in crate::verify::shapiro_reference_cases() {
            let r = shapiro_wilk(&case.sample).unwrap();
            assert!(
                (r.statistic - case.w).abs() < 1e-6,
                "{}: W={} want {}",
                case.label,
                r.statistic,
                case.w
            );
            assert_relative_eq!(r.p_value, case.p, max_relative = 1e-4);
        }
    }

    #[test]
    fn constant_sample_is_degenerate() {
        let r = shapiro_wilk(&[3.0; 10]).unwrap();
        assert!(r.degenerate);
        assert_eq!((r.statistic, r.p_value), (1.0, 1.0));
    }

    #[test]
    fn size_bounds() {
        assert_eq!(
            shapiro_wilk(&[1.0, 2.0]),
            Err(StatsError::SampleSize {
                n: 2,
                min: 3,
                max: SHAPIRO_WILK_MAX_N
            })
        );
        let big: Vec<f64> = (0..5001).map(f64::from).collect();
        assert!(matches!(
            shapiro_wilk(&big),
            Err(StatsError::SampleSize { n: 5001, .. })
        ));
        assert_eq!(shapiro_wilk::<f64>(&[]), Err(StatsError::EmptySample));
    }

    #[test]
    fn f32_agrees_with_f64() {
        let s: Vec<f64> = (0..50)
            .map(|i| (f64::from(i) * 0.7).sin() * 3.0 + f64::from(i) * 0.1)
            .collect();
        let s32: Vec<f32> = s.iter().map(|&v| v as f32).collect();
        let r64 = shapiro_wilk(&s).unwrap();
        let r32 = shapiro_wilk(&s32).unwrap();
        assert!((f64::from(r32.statistic) - r64.statistic).abs() < 1e-4);
        assert!((f64::from(r32.p_value) - r64.p_value).abs() < 1e-2);
    }

    proptest! {
        #[test]
        fn affine_invariant(values in prop::collection::vec(-100.0f64..100.0, 3..80), scale in 0.1f64..50.0, offset in -1e3f64..1e3) {
            prop_assume!(values.iter().any(|&v| (v - values[0]).abs() > 1e-6));
            let base = shapiro_wilk(&values).unwrap();
            let moved: Vec<f64> = values.iter().map(|&v| v * scale + offset).collect();
            let r = shapiro_wilk(&moved).unwrap();
            prop_assert!((base.statistic - r.statistic).abs() < 1e-9);
            prop_assert!(r.statistic > 0.0 && r.statistic <= 1.0);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }
}
