//! The two truncation testers and their supporting machinery.
//!
//! The consistent-hypothesis checker declares "truncated" exactly when some
//! junta of volume at most `1 - eps` accepts every sample. The minimum-volume
//! junta consistent with the samples on a support `S` accepts exactly the
//! observed patterns, so the check reduces to: does some size-k `S` see at
//! most `(1 - eps) * 2^k` distinct patterns? The comparison is exact
//! rational; a brute-force enumeration oracle over all juntas pins the
//! equivalence in the tests.
//!
//! The uniformity route projects the samples onto every size-k coordinate
//! set and counts pairwise collisions of the patterns. Under the uniform
//! source each projection is uniform on `2^k` patterns with expected
//! collision count `C(T,2)/m`; a distribution at distance `eps` inflates the
//! collision probability to at least `(1 + 4 eps^2)/m`, so the verdict
//! compares against `C(T,2) (1 + alpha eps^2) / m` with `alpha = 2` by
//! default and a calibrated `alpha` when a concrete failure rate must be
//! certified.

use std::collections::{HashMap, HashSet};
use std::fmt;

use num_traits::One;
use rand::Rng;

use crate::distributions::ProblemParams;
use crate::f2::{binom, log2_binom, weight_k_masks, CoordSet, Point};
use crate::rational::{rational, Rational};

/// Pattern spaces up to this size are counted in a flat array; larger ones
/// fall back to hashing.
const DIRECT_COUNT_LIMIT: u64 = 1 << 20;

/// Tester output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    Truncated,
    Untruncated,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Truncated => write!(f, "truncated"),
            Verdict::Untruncated => write!(f, "untruncated"),
        }
    }
}

/// Sample budgets for both testers, plus the per-subset failure rate the
/// uniformity route certifies.
#[derive(Clone, Debug)]
pub struct SampleBudget {
    /// Samples for the consistent-hypothesis checker.
    pub consistent: u64,
    /// Samples for the subset-wise uniformity tester.
    pub uniformity: u64,
    /// Per-subset false-positive budget; the union over all C(n,k) subsets
    /// totals 1/200.
    pub delta: Rational,
    /// Leading constant of the uniformity budget.
    pub c2: f64,
}

/// Samples for the consistent-hypothesis checker:
/// `ceil(100 (2^k + log2 C(n,k)) / log2(1/(1-eps)))`.
pub fn budget_consistent(p: &ProblemParams) -> u64 {
    budget_consistent_real(p).ceil() as u64
}

pub(crate) fn budget_consistent_real(p: &ProblemParams) -> f64 {
    let pow = (1u128 << p.k) as f64;
    let log_c = log2_binom(p.n as u64, p.k as u64);
    let rate = -(1.0 - p.eps_f64()).log2();
    100.0 * (pow + log_c) / rate
}

/// Budget for the uniformity route:
/// `max(2, ceil((c2/eps^2)(2^(k/2) sqrt(log2 C(n,k)) + log2 C(n,k))))`,
/// with `delta = 1/(200 C(n,k))`.
pub fn budget_uniformity(p: &ProblemParams, c2: f64) -> SampleBudget {
    assert!(c2 > 0.0, "budget constant c2 must be positive, got {c2}");
    let uniformity = budget_uniformity_real(p, c2).ceil().max(2.0) as u64;
    let delta = rational(1, 200u128.checked_mul(binom(p.n as u64, p.k as u64)).expect("C(n,k) too large"));
    SampleBudget {
        consistent: budget_consistent(p),
        uniformity,
        delta,
        c2,
    }
}

pub(crate) fn budget_uniformity_real(p: &ProblemParams, c2: f64) -> f64 {
    let eps = p.eps_f64();
    let log_c = log2_binom(p.n as u64, p.k as u64);
    (c2 / (eps * eps)) * (2f64.powf(p.k as f64 / 2.0) * log_c.sqrt() + log_c)
}

/// Number of distinct patterns the samples exhibit on `s`.
pub fn distinct_pattern_count(samples: &[Point], s: &CoordSet) -> u64 {
    assert!(!samples.is_empty(), "distinct pattern count of an empty sample list");
    let space = 1u64 << s.len();
    if space <= DIRECT_COUNT_LIMIT {
        let mut seen = vec![false; space as usize];
        let mut count = 0u64;
        for x in samples {
            let p = x.project(s) as usize;
            if !seen[p] {
                seen[p] = true;
                count += 1;
                if count == space {
                    break;
                }
            }
        }
        count
    } else {
        let mut seen = HashSet::new();
        for x in samples {
            seen.insert(x.project(s));
        }
        seen.len() as u64
    }
}

/// Outcome of the consistent-hypothesis check with its witness statistic:
/// the minimum distinct-pattern count over all size-k coordinate sets.
#[derive(Clone, Debug)]
pub struct ConsistentCheckOutcome {
    pub verdict: Verdict,
    pub min_distinct: u64,
    /// Exact acceptance threshold `(1 - eps) * 2^k`.
    pub threshold: Rational,
}

/// Declares "truncated" iff some size-k coordinate set sees at most
/// `(1 - eps) * 2^k` distinct patterns (exact rational comparison).
pub fn consistent_junta_check_detailed(
    samples: &[Point],
    p: &ProblemParams,
) -> ConsistentCheckOutcome {
    assert!(
        !samples.is_empty(),
        "consistency check over no samples: every junta would be vacuously consistent"
    );
    let threshold = (Rational::one() - p.eps) * Rational::from_integer(1u128 << p.k);
    let mut min_distinct = u64::MAX;
    for mask in weight_k_masks(p.n, p.k) {
        let s = CoordSet::from_mask(mask, p.n);
        min_distinct = min_distinct.min(distinct_pattern_count(samples, &s));
    }
    let verdict = if Rational::from_integer(min_distinct as u128) <= threshold {
        Verdict::Truncated
    } else {
        Verdict::Untruncated
    };
    ConsistentCheckOutcome {
        verdict,
        min_distinct,
        threshold,
    }
}

pub fn consistent_junta_check(samples: &[Point], p: &ProblemParams) -> Verdict {
    consistent_junta_check_detailed(samples, p).verdict
}

/// Number of unordered equal pairs in the pattern list, in one counting pass.
pub fn collision_count(pattern_indices: &[u64]) -> u64 {
    assert!(
        pattern_indices.len() >= 2,
        "a collision statistic needs at least two samples"
    );
    let max = *pattern_indices.iter().max().unwrap();
    if max < DIRECT_COUNT_LIMIT {
        let mut counts = vec![0u64; max as usize + 1];
        for &p in pattern_indices {
            counts[p as usize] += 1;
        }
        counts.iter().map(|&c| c * c.saturating_sub(1) / 2).sum()
    } else {
        let mut counts: HashMap<u64, u64> = HashMap::new();
        for &p in pattern_indices {
            *counts.entry(p).or_insert(0) += 1;
        }
        counts.values().map(|&c| c * (c - 1) / 2).sum()
    }
}

/// Domain size, distance parameter, and threshold constant for one
/// uniformity test over `[m]`.
#[derive(Clone, Copy, Debug)]
pub struct UniformityParams {
    pub m: u64,
    pub eps: f64,
    pub alpha: f64,
}

impl UniformityParams {
    pub fn new(m: u64, eps: f64, alpha: f64) -> Self {
        assert!(m >= 2, "uniformity domain must have at least 2 elements");
        assert!(eps > 0.0 && eps < 1.0, "eps must lie in (0,1), got {eps}");
        assert!(
            alpha * eps * eps > 0.0,
            "threshold must sit strictly above the uniform collision rate"
        );
        UniformityParams { m, eps, alpha }
    }

    /// The default threshold constant: midway between the uniform collision
    /// rate `1/m` and the far-case lower bound `(1 + 4 eps^2)/m`.
    pub fn with_default_alpha(m: u64, eps: f64) -> Self {
        UniformityParams::new(m, eps, 2.0)
    }

    /// Collision-count decision threshold for `t` samples.
    pub fn threshold(&self, t: u64) -> f64 {
        let pairs = (t as f64) * (t as f64 - 1.0) / 2.0;
        pairs * (1.0 + self.alpha * self.eps * self.eps) / self.m as f64
    }
}

/// Declares "truncated" iff the collision count strictly exceeds
/// `C(T,2) (1 + alpha eps^2) / m`.
pub fn uniformity_test(pattern_indices: &[u64], u: &UniformityParams) -> Verdict {
    let collisions = collision_count(pattern_indices);
    if collisions as f64 > u.threshold(pattern_indices.len() as u64) {
        Verdict::Truncated
    } else {
        Verdict::Untruncated
    }
}

/// Confidence amplification for the uniformity route.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Amplify {
    /// Single collision statistic over all samples.
    None,
    /// Split the samples into 9 batches and take the majority verdict.
    Median,
}

/// Outcome of the subset-wise uniformity test. `collisions` is the witness
/// subset's collision count when truncated, otherwise the maximum over all
/// subsets; `threshold` is the shared full-sample decision threshold.
#[derive(Clone, Debug)]
pub struct JuntaUniformityOutcome {
    pub verdict: Verdict,
    pub collisions: u64,
    pub threshold: f64,
}

/// Runs the collision uniformity test on the projection to every size-k
/// coordinate set, reusing the one sample set throughout; flags "truncated"
/// on the first subset that does.
pub fn junta_uniformity_test_detailed(
    samples: &[Point],
    p: &ProblemParams,
    budget: &SampleBudget,
    alpha: f64,
    amplify: Amplify,
) -> JuntaUniformityOutcome {
    assert_eq!(
        samples.len() as u64,
        budget.uniformity,
        "sample count {} does not match the uniformity budget {}",
        samples.len(),
        budget.uniformity
    );
    let u = UniformityParams::new(1u64 << p.k, p.eps_f64(), alpha);
    let threshold = u.threshold(samples.len() as u64);
    let mut max_collisions = 0u64;
    for mask in weight_k_masks(p.n, p.k) {
        let s = CoordSet::from_mask(mask, p.n);
        let projected: Vec<u64> = samples.iter().map(|x| x.project(&s)).collect();
        let collisions = collision_count(&projected);
        let verdict = match amplify {
            Amplify::None => {
                if collisions as f64 > threshold {
                    Verdict::Truncated
                } else {
                    Verdict::Untruncated
                }
            }
            Amplify::Median => majority_verdict(&projected, &u),
        };
        if verdict == Verdict::Truncated {
            return JuntaUniformityOutcome {
                verdict,
                collisions,
                threshold,
            };
        }
        max_collisions = max_collisions.max(collisions);
    }
    JuntaUniformityOutcome {
        verdict: Verdict::Untruncated,
        collisions: max_collisions,
        threshold,
    }
}

pub fn junta_uniformity_test(
    samples: &[Point],
    p: &ProblemParams,
    budget: &SampleBudget,
    alpha: f64,
    amplify: Amplify,
) -> Verdict {
    junta_uniformity_test_detailed(samples, p, budget, alpha, amplify).verdict
}

const MEDIAN_BATCHES: usize = 9;

fn majority_verdict(projected: &[u64], u: &UniformityParams) -> Verdict {
    let t = projected.len();
    assert!(
        t >= 2 * MEDIAN_BATCHES,
        "median amplification needs at least {} samples, got {t}",
        2 * MEDIAN_BATCHES
    );
    let base = t / MEDIAN_BATCHES;
    let extra = t % MEDIAN_BATCHES;
    let mut start = 0usize;
    let mut flagged = 0usize;
    for b in 0..MEDIAN_BATCHES {
        let len = base + usize::from(b < extra);
        let batch = &projected[start..start + len];
        start += len;
        if uniformity_test(batch, u) == Verdict::Truncated {
            flagged += 1;
        }
    }
    if flagged > MEDIAN_BATCHES / 2 {
        Verdict::Truncated
    } else {
        Verdict::Untruncated
    }
}

/// Everything the calibration run determines.
#[derive(Clone, Debug)]
pub struct CalibrationOutcome {
    /// Smallest threshold constant whose threshold clears the target.
    pub alpha: f64,
    /// Empirical (1 - delta) quantile of the null collision count.
    pub quantile: u64,
    /// Safety margin applied to the quantile, in sorted-sample positions.
    pub margin_ranks: u64,
    /// The quantile shifted by the margin: what the threshold must exceed.
    pub target: f64,
    pub mean: f64,
    /// The resulting decision threshold at the calibrated alpha.
    pub threshold: f64,
}

/// Calibration decision rule, shared by every count-generation path: sorts
/// the null counts, takes the nearest-rank `(1 - delta)` quantile, shifts it
/// up by three standard errors, and solves for the smallest `alpha` whose
/// threshold clears that target.
///
/// The standard error of an empirical quantile is binomial in rank space
/// (`sqrt(delta (1 - delta) N)` positions), so the margin is applied as a
/// rank shift through the sorted sample itself rather than through a density
/// estimate; values equal to the resulting threshold do not flag.
pub fn calibrate_from_counts(
    counts: &mut [u64],
    m: u64,
    eps: f64,
    t: u64,
    delta: Rational,
) -> CalibrationOutcome {
    let trials = counts.len();
    assert!(
        trials >= 1000,
        "calibration needs at least 1000 trials for a usable quantile, got {trials}"
    );
    assert!(t >= 2, "calibration needs at least two samples per test");
    counts.sort_unstable();
    let rank = (((Rational::one() - delta) * Rational::from_integer(trials as u128))
        .ceil()
        .to_integer() as usize)
        .clamp(1, trials);
    let quantile = counts[rank - 1];

    let delta_f = crate::rational::rational_to_f64(&delta);
    let rank_se = (delta_f * (1.0 - delta_f) * trials as f64).sqrt();
    let margin_ranks = (3.0 * rank_se).ceil() as usize;
    let target_rank = (rank + margin_ranks).min(trials);
    let target = counts[target_rank - 1] as f64;

    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / trials as f64;
    let pairs = (t as f64) * (t as f64 - 1.0) / 2.0;
    let alpha = (target * m as f64 / pairs - 1.0) / (eps * eps);
    let threshold = pairs * (1.0 + alpha * eps * eps) / m as f64;
    CalibrationOutcome {
        alpha,
        quantile,
        margin_ranks: margin_ranks as u64,
        target,
        mean,
        threshold,
    }
}

/// Simulates `trials` collision counts of `t` uniform draws over `[m]` and
/// calibrates the threshold constant to a per-test false-positive rate of at
/// most `delta`.
pub fn calibrate_alpha<R: Rng + ?Sized>(
    m: u64,
    eps: f64,
    t: u64,
    delta: Rational,
    trials: u64,
    rng: &mut R,
) -> f64 {
    assert!(trials >= 1000, "calibration needs at least 1000 trials, got {trials}");
    let mut counts: Vec<u64> = (0..trials)
        .map(|_| {
            let indices: Vec<u64> = (0..t).map(|_| rng.random_range(0..m)).collect();
            collision_count(&indices)
        })
        .collect();
    calibrate_from_counts(&mut counts, m, eps, t, delta).alpha
}
