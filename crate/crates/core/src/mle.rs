//! The maximum-likelihood distinguisher against parity truncations, and the
//! dual-subspace statistics that determine its failure rate.
//!
//! For samples `x(1), ..., x(T)` the distinguisher compares the mixture
//! likelihood over all size-k parity truncations with the uniform
//! likelihood; since every nonempty parity has volume exactly 1/2, that
//! comparison reduces to counting the size-k sets `S` whose bit-sum vanishes
//! on every sample and flagging when the count reaches `C(n,k) / 2^T`.
//!
//! The same count is the number of weight-k points in the subspace
//! orthogonal to the samples, which is what `subspace_trial` measures from
//! the generator side. The two routes are computed independently (parities
//! over coordinate sets vs. inner products against enumerated points) and
//! cross-checked wherever both appear.

use rand::Rng;

use crate::f2::{binom, dual_weight_count, log2_binom, weight_k_masks, CoordSet, Point, SubspaceTrial};
use crate::rational::{rational, Rational};
use crate::testers::Verdict;

/// A sample set together with the arity of the parity class under test.
#[derive(Clone, Debug)]
pub struct MleInstance {
    samples: Vec<Point>,
    n: usize,
    k: usize,
}

impl MleInstance {
    pub fn new(samples: Vec<Point>, n: usize, k: usize) -> Self {
        assert!(!samples.is_empty(), "the distinguisher needs at least one sample");
        assert!(k >= 1 && k <= n, "arity k must satisfy 1 <= k <= n");
        for x in &samples {
            assert_eq!(
                x.dimension(),
                n,
                "sample of dimension {} in an instance over dimension {n}",
                x.dimension()
            );
        }
        MleInstance { samples, n, k }
    }

    pub fn samples(&self) -> &[Point] {
        &self.samples
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of samples.
    pub fn t(&self) -> u64 {
        self.samples.len() as u64
    }
}

/// Counts the size-k coordinate sets whose bit-sum is 0 on every sample,
/// i.e. the parities consistent with the samples as satisfying assignments.
pub fn parity_consistent_count(inst: &MleInstance) -> u64 {
    weight_k_masks(inst.n, inst.k)
        .filter(|&mask| {
            let s = CoordSet::from_mask(mask, inst.n);
            inst.samples.iter().all(|x| x.parity_on(&s) == 0)
        })
        .count() as u64
}

/// The decision threshold `C(n,k) / 2^t`, exactly.
pub fn decision_threshold(n: usize, k: usize, t: u64) -> Rational {
    assert!(t <= 127, "threshold denominator 2^{t} exceeds u128");
    rational(binom(n as u64, k as u64), 1u128 << t)
}

// count >= C(n,k) / 2^t, compared in integers.
fn count_reaches_threshold(count: u64, n: usize, k: usize, t: u64) -> bool {
    let c = binom(n as u64, k as u64);
    if t >= 128 {
        return count > 0;
    }
    match (count as u128).checked_shl(t as u32) {
        Some(lhs) => lhs >= c,
        None => count > 0,
    }
}

/// Flags "truncated" iff the parity-consistent count reaches
/// `C(n,k) / 2^T` (ties flag, matching the `>=` rule).
pub fn mle_decide(inst: &MleInstance) -> Verdict {
    let count = parity_consistent_count(inst);
    if count_reaches_threshold(count, inst.n, inst.k, inst.t()) {
        Verdict::Truncated
    } else {
        Verdict::Untruncated
    }
}

/// Draws `t` uniform generators and counts the weight-k points orthogonal to
/// all of them.
pub fn subspace_trial<R: Rng + ?Sized>(n: usize, k: usize, t: u64, rng: &mut R) -> SubspaceTrial {
    let generators: Vec<Point> = (0..t).map(|_| Point::random_uniform(n, rng)).collect();
    let w = dual_weight_count(n, &generators, k);
    SubspaceTrial { generators, k, w }
}

/// Empirical moments of the dual weight-k count over independent trials,
/// alongside the exact expectation `C(n,k) / 2^t`.
#[derive(Clone, Debug)]
pub struct MomentReport {
    pub trials: u64,
    pub mean_w: f64,
    pub second_moment_w: f64,
    pub p_w_geq_1: f64,
    pub exact_expectation: Rational,
}

pub fn estimate_moments<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    t: u64,
    trials: u64,
    rng: &mut R,
) -> MomentReport {
    assert!(trials >= 1, "moment estimation needs at least one trial");
    let mut sum_w = 0.0f64;
    let mut sum_w2 = 0.0f64;
    let mut at_least_one = 0u64;
    for _ in 0..trials {
        let w = subspace_trial(n, k, t, rng).w as f64;
        sum_w += w;
        sum_w2 += w * w;
        at_least_one += u64::from(w >= 1.0);
    }
    MomentReport {
        trials,
        mean_w: sum_w / trials as f64,
        second_moment_w: sum_w2 / trials as f64,
        p_w_geq_1: at_least_one as f64 / trials as f64,
        exact_expectation: decision_threshold(n, k, t),
    }
}

/// Sample count at the decision boundary: `max(1, ceil(log2 C(n,k)))`. When
/// `C(n,k)` is a power of two the exact expectation of the dual count is 1.
pub fn mle_sample_size(n: usize, k: usize) -> u64 {
    assert!(k >= 1 && k <= n, "arity k must satisfy 1 <= k <= n");
    (log2_binom(n as u64, k as u64).ceil() as u64).max(1)
}

/// One uniform-source trial of the distinguisher, with the dual-count
/// cross-check computed through the generator-side route.
#[derive(Clone, Debug)]
pub struct MleTrialOutcome {
    pub count: u64,
    pub flagged: bool,
    pub w: u64,
    /// True when the parity-side decision disagrees with the dual-count
    /// decision; the exact identity says this never happens.
    pub mismatch: bool,
}

pub fn mle_trial<R: Rng + ?Sized>(n: usize, k: usize, t: u64, rng: &mut R) -> MleTrialOutcome {
    let samples: Vec<Point> = (0..t).map(|_| Point::random_uniform(n, rng)).collect();
    let inst = MleInstance::new(samples, n, k);
    let count = parity_consistent_count(&inst);
    let flagged = count_reaches_threshold(count, n, k, t);
    let w = dual_weight_count(n, inst.samples(), k);
    let mismatch = flagged != count_reaches_threshold(w, n, k, t) || count != w;
    MleTrialOutcome {
        count,
        flagged,
        w,
        mismatch,
    }
}

/// Fraction of uniform-sample trials the distinguisher flags as truncated,
/// at the boundary sample count `mle_sample_size(n, k)`.
pub fn mle_error_experiment<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    trials: u64,
    rng: &mut R,
) -> f64 {
    mle_error_experiment_with_t(n, k, mle_sample_size(n, k), trials, rng)
}

/// Same experiment at an explicit sample count.
pub fn mle_error_experiment_with_t<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    t: u64,
    trials: u64,
    rng: &mut R,
) -> f64 {
    assert!(trials >= 1, "error experiment needs at least one trial");
    let mut flagged = 0u64;
    for _ in 0..trials {
        let outcome = mle_trial(n, k, t, rng);
        assert!(!outcome.mismatch, "parity-side and dual-side decisions disagreed");
        flagged += u64::from(outcome.flagged);
    }
    flagged as f64 / trials as f64
}
