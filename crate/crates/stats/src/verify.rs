//! Seeded self-checks comparing the asymptotic tests against exact oracles
//! and closed-form references. Every suite is deterministic for a given seed.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{
    dunn_posthoc, kruskal_wallis, mann_whitney_exact, mann_whitney_u, mann_whitney_u_with,
    shapiro_wilk, MannWhitneyOptions, PAdjust, Sidedness,
};

pub const DEFAULT_SEED: u64 = 0x0000_0FCE_5EED_2024;

/// Group sizes for the exact-vs-asymptotic comparison. The normal
/// approximation cannot stay within 0.05 of the exact p when a group has
/// fewer than three observations, so both groups draw from `3..=9` with a
/// pooled size of at most 12.
pub const MW_MIN_GROUP: usize = 3;
pub const MW_MAX_POOLED: usize = 12;

pub const MW_MAX_P_GAP: f64 = 0.05;
pub const MW_MIN_AGREEMENT: f64 = 0.99;
pub const KW_MW_TOLERANCE: f64 = 1e-9;
pub const SHAPIRO_W_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub mann_whitney_cases: usize,
    pub kruskal_cases: usize,
    pub dunn_cases: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            mann_whitney_cases: 1000,
            kruskal_cases: 200,
            dunn_cases: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MannWhitneyOracleSummary {
    pub cases: usize,
    pub max_p_gap: f64,
    pub decision_agreement: f64,
    pub u_sum_violations: usize,
}

impl MannWhitneyOracleSummary {
    pub fn passed(&self) -> bool {
        self.max_p_gap <= MW_MAX_P_GAP
            && self.decision_agreement >= MW_MIN_AGREEMENT
            && self.u_sum_violations == 0
    }
}

/// Draws tie-free sample pairs and compares the continuity-corrected normal
/// approximation with exact enumeration at alpha = 0.05.
pub fn mann_whitney_oracle(seed: u64, cases: usize) -> MannWhitneyOracleSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_gap = 0.0_f64;
    let mut agree = 0usize;
    let mut u_violations = 0usize;
    for _ in 0..cases {
        let n1 = rng.random_range(MW_MIN_GROUP..=MW_MAX_POOLED - MW_MIN_GROUP);
        let n2 = rng.random_range(MW_MIN_GROUP..=MW_MAX_POOLED - n1);
        let (a, b) = tie_free_pair(&mut rng, n1, n2);

        let approx = mann_whitney_u(&a, &b, Sidedness::TwoSided).expect("valid samples");
        let exact = mann_whitney_exact(&a, &b, Sidedness::TwoSided).expect("valid samples");
        max_gap = max_gap.max((approx.p_value - exact.p_value).abs());
        if approx.is_significant(0.05) == exact.is_significant(0.05) {
            agree += 1;
        }
        let reverse = mann_whitney_u(&b, &a, Sidedness::TwoSided).expect("valid samples");
        if approx.statistic + reverse.statistic != (n1 * n2) as f64 {
            u_violations += 1;
        }
    }
    MannWhitneyOracleSummary {
        cases,
        max_p_gap: max_gap,
        decision_agreement: if cases == 0 {
            1.0
        } else {
            agree as f64 / cases as f64
        },
        u_sum_violations: u_violations,
    }
}

fn tie_free_pair(rng: &mut ChaCha8Rng, n1: usize, n2: usize) -> (Vec<f64>, Vec<f64>) {
    // Distinct values: a random permutation of evenly spaced points with jitter
    // smaller than the spacing.
    let mut pool: Vec<f64> = (0..n1 + n2)
        .map(|i| i as f64 * 10.0 + rng.random_range(0.0..9.0))
        .collect();
    pool.shuffle(rng);
    let b = pool.split_off(n1);
    (pool, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KruskalIdentitySummary {
    pub cases: usize,
    pub max_p_gap: f64,
}

impl KruskalIdentitySummary {
    pub fn passed(&self) -> bool {
        self.max_p_gap <= KW_MW_TOLERANCE
    }
}

/// Two-group Kruskal-Wallis p against the uncorrected Mann-Whitney p on
/// random inputs with ties.
pub fn kruskal_mann_whitney_identity(seed: u64, cases: usize) -> KruskalIdentitySummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4B57);
    let mut max_gap = 0.0_f64;
    let options = MannWhitneyOptions {
        sidedness: Sidedness::TwoSided,
        continuity_correction: false,
    };
    for _ in 0..cases {
        let a = tied_sample(&mut rng);
        let b = tied_sample(&mut rng);
        let kw = kruskal_wallis(&[&a[..], &b[..]]).expect("valid groups");
        let mw = mann_whitney_u_with(&a, &b, options).expect("valid samples");
        max_gap = max_gap.max((kw.p_value - mw.p_value).abs());
    }
    KruskalIdentitySummary {
        cases,
        max_p_gap: max_gap,
    }
}

fn tied_sample(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.random_range(2..=30);
    (0..n)
        .map(|_| f64::from(rng.random_range(0..=10u8)) * 10.0)
        .collect()
}

/// A Shapiro-Wilk reference case: sample, expected W, expected p.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapiroReference {
    pub label: &'static str,
    pub sample: Vec<f64>,
    pub w: f64,
    pub p: f64,
}

/// Reference W and p values computed with an independent AS R94
/// implementation.
pub fn shapiro_reference_cases() -> Vec<ShapiroReference> {
    let sin_series = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| (i as f64 * 0.7).sin() * 3.0 + i as f64 * 0.1)
            .collect()
    };
    let squares = |n: usize| -> Vec<f64> { (0..n).map(|i| (i * i) as f64).collect() };
    let case = |label, sample, w, p| ShapiroReference {
        label,
        sample,
        w,
        p,
    };
    vec![
        case(
            "n3",
            vec![1.0, 2.0, 4.0],
            0.9642857142857142,
            0.6368868450289689,
        ),
        case("n3_even", vec![1.0, 2.0, 3.0], 1.0, 1.0),
        case(
            "n5",
            vec![2.1, 3.4, 1.9, 5.6, 4.4],
            0.9320849391953863,
            0.6106559022604845,
        ),
        case(
            "heights10",
            vec![
                148.0, 154.0, 158.0, 160.0, 161.0, 162.0, 166.0, 170.0, 182.0, 195.0,
            ],
            0.9080491141028906,
            0.2678575575376505,
        ),
        case(
            "skewed11",
            vec![1.0, 1.0, 1.0, 2.0, 2.0, 3.0, 4.0, 6.0, 9.0, 15.0, 30.0],
            0.7019861475182378,
            0.0004960940722380928,
        ),
        case(
            "sin12",
            sin_series(12),
            0.9431777289830802,
            0.5403018297630489,
        ),
        case(
            "sin20",
            sin_series(20),
            0.9411410395727671,
            0.25196678366884806,
        ),
        case(
            "sin50",
            sin_series(50),
            0.9802072606333544,
            0.5607379653126479,
        ),
        case(
            "sin100",
            sin_series(100),
            0.9865375187129265,
            0.4072832337998031,
        ),
        case(
            "sin400",
            sin_series(400),
            0.96541801342673,
            4.1167095149883844e-08,
        ),
        case(
            "squares25",
            squares(25),
            0.8942887792968962,
            0.013807670360186194,
        ),
        case(
            "squares60",
            squares(60),
            0.8936805596847615,
            7.801393445553023e-05,
        ),
        case(
            "linear5000",
            (0..5000).map(f64::from).collect(),
            0.9549060193583592,
            9.41267774906087e-37,
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapiroSummary {
    pub cases: usize,
    pub max_w_gap: f64,
    pub constant_ok: bool,
}

impl ShapiroSummary {
    pub fn passed(&self) -> bool {
        self.max_w_gap <= SHAPIRO_W_TOLERANCE && self.constant_ok
    }
}

pub fn shapiro_references() -> ShapiroSummary {
    let cases = shapiro_reference_cases();
    let max_w_gap = cases
        .iter()
        .map(|c| match shapiro_wilk(&c.sample) {
            Ok(r) => (r.statistic - c.w).abs(),
            Err(_) => f64::INFINITY,
        })
        .fold(0.0, f64::max);
    let constant_ok = matches!(
        shapiro_wilk(&[7.5; 12]),
        Ok(r) if r.degenerate && r.statistic == 1.0 && r.p_value == 1.0
    );
    ShapiroSummary {
        cases: cases.len(),
        max_w_gap,
        constant_ok,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DunnSummary {
    pub cases: usize,
    pub identical_non_unit: usize,
    pub adjusted_below_raw: usize,
    pub antisymmetry_violations: usize,
}

impl DunnSummary {
    pub fn passed(&self) -> bool {
        self.identical_non_unit == 0
            && self.adjusted_below_raw == 0
            && self.antisymmetry_violations == 0
    }
}

pub fn dunn_properties(seed: u64, cases: usize) -> DunnSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD0DD);
    let mut summary = DunnSummary {
        cases,
        identical_non_unit: 0,
        adjusted_below_raw: 0,
        antisymmetry_violations: 0,
    };
    for _ in 0..cases {
        let k = rng.random_range(2..=5);
        let groups: Vec<Vec<f64>> = (0..k).map(|_| tied_sample(&mut rng)).collect();
        let refs: Vec<&[f64]> = groups.iter().map(|g| g.as_slice()).collect();

        let same: Vec<&[f64]> = vec![refs[0]; k];
        for pair in dunn_posthoc(&same, PAdjust::Holm).expect("valid groups") {
            if pair.result.p_value != 1.0 {
                summary.identical_non_unit += 1;
            }
        }

        let fwd = dunn_posthoc(&refs, PAdjust::Holm).expect("valid groups");
        summary.adjusted_below_raw += fwd.iter().filter(|p| p.result.p_value < p.raw_p).count();

        let rev_refs: Vec<&[f64]> = refs.iter().rev().copied().collect();
        let rev = dunn_posthoc(&rev_refs, PAdjust::Holm).expect("valid groups");
        for p in &fwd {
            let mirrored = rev
                .iter()
                .find(|q| q.first == k - 1 - p.second && q.second == k - 1 - p.first);
            match mirrored {
                Some(q) if q.result.statistic == -p.result.statistic => {}
                _ => summary.antisymmetry_violations += 1,
            }
        }
    }
    summary
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub mann_whitney: MannWhitneyOracleSummary,
    pub kruskal: KruskalIdentitySummary,
    pub shapiro: ShapiroSummary,
    pub dunn: DunnSummary,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mann_whitney.passed()
            && self.kruskal.passed()
            && self.shapiro.passed()
            && self.dunn.passed()
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed {:#x}", self.seed)?;
        let mw = &self.mann_whitney;
        writeln!(
            f,
            "{} mann-whitney exact vs asymptotic: cases={} max|dp|={:.6} agreement={:.4} u-sum violations={}",
            verdict(mw.passed()),
            mw.cases,
            mw.max_p_gap,
            mw.decision_agreement,
            mw.u_sum_violations
        )?;
        writeln!(
            f,
            "{} kruskal-wallis vs mann-whitney: cases={} max|dp|={:.3e}",
            verdict(self.kruskal.passed()),
            self.kruskal.cases,
            self.kruskal.max_p_gap
        )?;
        writeln!(
            f,
            "{} shapiro-wilk references: cases={} max|dW|={:.3e} constant={}",
            verdict(self.shapiro.passed()),
            self.shapiro.cases,
            self.shapiro.max_w_gap,
            self.shapiro.constant_ok
        )?;
        write!(
            f,
            "{} dunn properties: cases={} identical-non-unit={} adjusted<raw={} antisymmetry={}",
            verdict(self.dunn.passed()),
            self.dunn.cases,
            self.dunn.identical_non_unit,
            self.dunn.adjusted_below_raw,
            self.dunn.antisymmetry_violations
        )
    }
}

pub fn run_all(config: &VerifyConfig) -> VerifyReport {
    VerifyReport {
        seed: config.seed,
        mann_whitney: mann_whitney_oracle(config.seed, config.mann_whitney_cases),
        kruskal: kruskal_mann_whitney_identity(config.seed, config.kruskal_cases),
        shapiro: shapiro_references(),
        dunn: dunn_properties(config.seed, config.dunn_cases),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suites_pass() {
        let report = run_all(&VerifyConfig {
            mann_whitney_cases: 300,
            kruskal_cases: 50,
            dunn_cases: 50,
            ..VerifyConfig::default()
        });
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = VerifyConfig {
            mann_whitney_cases: 50,
            kruskal_cases: 10,
            dunn_cases: 10,
            ..VerifyConfig::default()
        };
        assert_eq!(run_all(&cfg).to_string(), run_all(&cfg).to_string());
    }

    #[test]
    fn samples_are_tie_free_and_sized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (a, b) = tie_free_pair(&mut rng, 4, 5);
            let mut all: Vec<f64> = a.iter().chain(&b).copied().collect();
            all.sort_by(f64::total_cmp);
            all.dedup();
            assert_eq!(all.len(), 9);
        }
    }
}
