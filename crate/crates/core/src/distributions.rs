//! Junta and parity truncation specs, exact volume/distance accounting, and
//! rejection-free samplers for the three source distributions: uniform,
//! junta-truncated, and parity-truncated.
//!
//! Samplers are exact by construction: a junta-truncated draw picks an
//! accepting support pattern uniformly and fills every other coordinate with
//! a fair bit, which puts mass `1 / |f^-1(1)|` on each satisfying assignment.
//! There is no rejection loop, so cost is constant even at tiny volumes.

use std::fmt;
use std::str::FromStr;

use num_traits::One;
use rand::Rng;

use crate::f2::{CoordSet, Point};
use crate::rational::{rational, Rational};

/// Truth tables are materialized, so arity is capped to keep them in memory.
pub const MAX_JUNTA_ARITY: usize = 26;

/// Largest arity for which `random_junta` will materialize the pattern pool.
pub const MAX_RANDOM_JUNTA_ARITY: usize = 20;

/// A junta: a support set of `k` coordinates and a truth table over the
/// `2^k` support patterns, indexed as in [`Point::project`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JuntaSpec {
    support: CoordSet,
    table: Vec<bool>,
    accepting: Vec<u64>,
}

impl JuntaSpec {
    /// Builds a junta, checking the table length and that at least one
    /// pattern is accepted (otherwise the truncated distribution is empty).
    pub fn new(support: CoordSet, table: Vec<bool>) -> Self {
        let k = support.len();
        assert!(k <= MAX_JUNTA_ARITY, "junta arity {k} exceeds {MAX_JUNTA_ARITY}");
        assert_eq!(table.len(), 1usize << k, "table length must be 2^k");
        let accepting: Vec<u64> = table
            .iter()
            .enumerate()
            .filter_map(|(p, &b)| b.then_some(p as u64))
            .collect();
        assert!(
            !accepting.is_empty(),
            "junta accepts no pattern; the truncated distribution would be empty"
        );
        JuntaSpec {
            support,
            table,
            accepting,
        }
    }

    pub fn support(&self) -> &CoordSet {
        &self.support
    }

    /// Number of support coordinates.
    pub fn arity(&self) -> usize {
        self.support.len()
    }

    /// Ambient dimension the junta lives in.
    pub fn ambient(&self) -> usize {
        self.support.ambient()
    }

    pub fn table(&self) -> &[bool] {
        &self.table
    }

    /// Accepted support patterns, ascending.
    pub fn accepting_patterns(&self) -> &[u64] {
        &self.accepting
    }

    /// Evaluates the junta on a point whose dimension covers the support.
    pub fn eval(&self, x: &Point) -> bool {
        if let Some(&max) = self.support.indices().last() {
            assert!(
                max <= x.dimension(),
                "point dimension {} below junta support coordinate {max}",
                x.dimension()
            );
        }
        let pattern = self
            .support
            .indices()
            .iter()
            .fold(0usize, |acc, &i| (acc << 1) | x.coord(i) as usize);
        self.table[pattern]
    }

    /// Fraction of the hypercube the junta accepts, exactly.
    pub fn volume(&self) -> Rational {
        rational(self.accepting.len() as u128, 1u128 << self.arity())
    }

    /// Total variation distance between the uniform distribution and its
    /// truncation by this junta: exactly `1 - volume`.
    pub fn tv_from_uniform(&self) -> Rational {
        Rational::one() - self.volume()
    }

    /// The negated parity on `S` as a junta: accepts exactly the patterns of
    /// even Hamming weight.
    pub fn from_parity(p: &ParitySpec) -> JuntaSpec {
        let k = p.coords().len();
        let table = (0..1u64 << k).map(|pat| pat.count_ones() % 2 == 0).collect();
        JuntaSpec::new(p.coords().clone(), table)
    }
}

/// Text record `n k i1,...,ik table`, with the table as a `2^k`-character
/// 0/1 string, pattern index 0 first. An empty support is written `-`.
impl fmt::Display for JuntaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let coords = if self.support.is_empty() {
            "-".to_string()
        } else {
            self.support
                .indices()
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let table: String = self
            .table
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect();
        write!(f, "{} {} {} {}", self.ambient(), self.arity(), coords, table)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("junta record: {0}")]
pub struct RecordError(String);

impl FromStr for JuntaSpec {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, RecordError> {
        let err = |msg: String| RecordError(msg);
        let fields: Vec<&str> = s.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, got {}", fields.len())));
        }
        let n: usize = fields[0]
            .parse()
            .map_err(|e| err(format!("bad dimension {:?}: {e}", fields[0])))?;
        let k: usize = fields[1]
            .parse()
            .map_err(|e| err(format!("bad arity {:?}: {e}", fields[1])))?;
        if n < 1 {
            return Err(err("dimension must be at least 1".into()));
        }
        if k > n || k > MAX_JUNTA_ARITY {
            return Err(err(format!("arity {k} out of range for dimension {n}")));
        }
        let indices: Vec<usize> = if fields[2] == "-" {
            Vec::new()
        } else {
            fields[2]
                .split(',')
                .map(|t| t.parse::<usize>().map_err(|e| err(format!("bad coordinate {t:?}: {e}"))))
                .collect::<Result<_, _>>()?
        };
        if indices.len() != k {
            return Err(err(format!("expected {k} coordinates, got {}", indices.len())));
        }
        for pair in indices.windows(2) {
            if pair[0] >= pair[1] {
                return Err(err("coordinates must be strictly increasing".into()));
            }
        }
        if indices.first().is_some_and(|&i| i < 1) || indices.last().is_some_and(|&i| i > n) {
            return Err(err(format!("coordinates must lie in 1..={n}")));
        }
        if fields[3].len() != 1usize << k {
            return Err(err(format!(
                "table must have {} characters, got {}",
                1usize << k,
                fields[3].len()
            )));
        }
        let table: Vec<bool> = fields[3]
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(err(format!("bad table character {other:?}"))),
            })
            .collect::<Result<_, _>>()?;
        if !table.iter().any(|&b| b) {
            return Err(err("table accepts no pattern".into()));
        }
        Ok(JuntaSpec::new(CoordSet::new(indices, n), table))
    }
}

/// The negated parity function on a nonempty coordinate set: accepts exactly
/// the points with an even bit-sum on the set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParitySpec {
    coords: CoordSet,
}

impl ParitySpec {
    pub fn new(coords: CoordSet) -> Self {
        assert!(!coords.is_empty(), "parity support must be nonempty");
        ParitySpec { coords }
    }

    pub fn coords(&self) -> &CoordSet {
        &self.coords
    }

    pub fn accepts(&self, x: &Point) -> bool {
        x.parity_on(&self.coords) == 0
    }
}

/// The unknown source being tested.
#[derive(Clone, Debug)]
pub enum SourceDistribution {
    Uniform { n: usize },
    JuntaTruncated(JuntaSpec),
    ParityTruncated(ParitySpec),
}

impl SourceDistribution {
    pub fn dimension(&self) -> usize {
        match self {
            SourceDistribution::Uniform { n } => *n,
            SourceDistribution::JuntaTruncated(f) => f.ambient(),
            SourceDistribution::ParityTruncated(p) => p.coords().ambient(),
        }
    }

    /// Draws one point. Junta truncation picks an accepting pattern uniformly
    /// and fills the rest with fair bits; parity truncation fills everything
    /// but the largest support coordinate and then balances the bit-sum.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            SourceDistribution::Uniform { n } => Point::random_uniform(*n, rng),
            SourceDistribution::JuntaTruncated(f) => {
                let mut x = Point::random_uniform(f.ambient(), rng);
                let patterns = f.accepting_patterns();
                let pattern = patterns[rng.random_range(0..patterns.len())];
                let k = f.arity();
                for (j, &i) in f.support().indices().iter().enumerate() {
                    x.set_coord(i, ((pattern >> (k - 1 - j)) & 1) as u8);
                }
                debug_assert!(f.eval(&x));
                x
            }
            SourceDistribution::ParityTruncated(p) => {
                let mut x = Point::random_uniform(p.coords().ambient(), rng);
                let indices = p.coords().indices();
                let (&pivot, rest) = indices.split_last().unwrap();
                let parity = rest.iter().fold(0u8, |acc, &i| acc ^ x.coord(i));
                x.set_coord(pivot, parity);
                debug_assert_eq!(x.parity_on(p.coords()), 0);
                x
            }
        }
    }
}

/// Problem parameters: ambient dimension, junta arity, and the volume-gap
/// parameter `eps` with `vol <= 1 - eps` defining the truncated class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProblemParams {
    pub n: usize,
    pub k: usize,
    pub eps: Rational,
}

#[derive(Debug, thiserror::Error)]
pub enum ParamsError {
    #[error("dimension n must be at least 1, got {0}")]
    Dimension(usize),
    #[error("arity k must satisfy 1 <= k <= n, got k = {k} with n = {n}")]
    Arity { k: usize, n: usize },
    #[error("eps must lie strictly between 0 and 1, got {0}")]
    Distance(String),
}

impl ProblemParams {
    pub fn new(n: usize, k: usize, eps: Rational) -> Result<Self, ParamsError> {
        if n < 1 {
            return Err(ParamsError::Dimension(n));
        }
        if k < 1 || k > n {
            return Err(ParamsError::Arity { k, n });
        }
        if eps <= Rational::from_integer(0) || eps >= Rational::one() {
            return Err(ParamsError::Distance(format!("{eps}")));
        }
        Ok(ProblemParams { n, k, eps })
    }

    pub fn eps_f64(&self) -> f64 {
        crate::rational::rational_to_f64(&self.eps)
    }
}

/// Uniformly random coordinate set of size `k` from `[n]`, via a partial
/// Fisher-Yates pass.
pub fn random_coord_set<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> CoordSet {
    assert!(k <= n, "cannot draw {k} coordinates from [{n}]");
    let mut pool: Vec<usize> = (1..=n).collect();
    for j in 0..k {
        let r = rng.random_range(j..n);
        pool.swap(j, r);
    }
    CoordSet::new(pool[..k].to_vec(), n)
}

/// Uniformly random junta with support size exactly `k` and volume at most
/// `max_vol`: the accepting-pattern count is uniform in
/// `1..=floor(max_vol * 2^k)` and the pattern set uniform at that size.
pub fn random_junta<R: Rng + ?Sized>(
    params: &ProblemParams,
    max_vol: Rational,
    rng: &mut R,
) -> JuntaSpec {
    let k = params.k;
    assert!(
        k <= MAX_RANDOM_JUNTA_ARITY,
        "random junta generation supports k <= {MAX_RANDOM_JUNTA_ARITY}, got {k}"
    );
    let slots = 1u128 << k;
    let max_ones = (max_vol
        .numer()
        .checked_mul(slots)
        .expect("volume bound too fine for u128 arithmetic")
        / max_vol.denom())
    .min(slots);
    assert!(max_ones >= 1, "max_vol {max_vol} is below 2^-{k}: no accepting pattern allowed");

    let support = random_coord_set(params.n, k, rng);
    let ones = rng.random_range(1..=max_ones as u64) as usize;
    let mut patterns: Vec<u64> = (0..1u64 << k).collect();
    for j in 0..ones {
        let r = rng.random_range(j..patterns.len());
        patterns.swap(j, r);
    }
    let mut table = vec![false; 1usize << k];
    for &p in &patterns[..ones] {
        table[p as usize] = true;
    }
    JuntaSpec::new(support, table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rational;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn and_junta() -> JuntaSpec {
        // AND of coordinates 1 and 2 in dimension 4
        JuntaSpec::new(
            CoordSet::new(vec![1, 2], 4),
            vec![false, false, false, true],
        )
    }

    #[test]
    fn eval_examples() {
        let f = and_junta();
        assert!(f.eval(&Point::from_bit_str("1100")));
        assert!(!f.eval(&Point::from_bit_str("1000")));
        let chi = JuntaSpec::from_parity(&ParitySpec::new(CoordSet::new(vec![1, 2], 4)));
        assert!(chi.eval(&Point::from_bit_str("1100")));
    }

    #[test]
    fn volume_examples() {
        let const_one = JuntaSpec::new(CoordSet::empty(4), vec![true]);
        assert_eq!(const_one.volume(), rational(1, 1));
        assert_eq!(const_one.tv_from_uniform(), rational(0, 1));

        for k in 1..=5 {
            let coords: Vec<usize> = (1..=k).collect();
            let chi = JuntaSpec::from_parity(&ParitySpec::new(CoordSet::new(coords, 6)));
            assert_eq!(chi.volume(), rational(1, 2));
        }

        assert_eq!(and_junta().volume(), rational(1, 4));
        assert_eq!(and_junta().tv_from_uniform(), rational(3, 4));
    }

    #[test]
    fn parity_table_examples() {
        let chi1 = JuntaSpec::from_parity(&ParitySpec::new(CoordSet::new(vec![1], 3)));
        assert_eq!(chi1.table(), &[true, false]);
        let chi12 = JuntaSpec::from_parity(&ParitySpec::new(CoordSet::new(vec![1, 2], 3)));
        assert_eq!(chi12.table(), &[true, false, false, true]);
    }

    // Exhaustive TV oracle: half the L1 distance between the truncated
    // distribution and uniform, summed point by point in exact arithmetic.
    fn tv_exhaustive(f: &JuntaSpec) -> Rational {
        let n = f.ambient();
        assert!(n <= 10);
        let sat = (0..1u64 << n)
            .filter(|&m| f.eval(&Point::from_mask(m, n)))
            .count() as u128;
        let mut twice_tv = rational(0, 1);
        for m in 0..1u64 << n {
            let p = if f.eval(&Point::from_mask(m, n)) {
                rational(1, sat)
            } else {
                rational(0, 1)
            };
            let q = rational(1, 1u128 << n);
            twice_tv += if p >= q { p - q } else { q - p };
        }
        twice_tv / rational(2, 1)
    }

    #[test]
    fn tv_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let chi = JuntaSpec::from_parity(&ParitySpec::new(CoordSet::new(vec![2, 5], 8)));
        assert_eq!(tv_exhaustive(&chi), rational(1, 2));
        assert_eq!(chi.tv_from_uniform(), rational(1, 2));

        assert_eq!(tv_exhaustive(&and_junta()), rational(3, 4));

        for n in [4usize, 7, 10] {
            for k in 1..=3.min(n) {
                let params = ProblemParams::new(n, k, rational(1, 4)).unwrap();
                let f = random_junta(&params, rational(3, 4), &mut rng);
                assert_eq!(tv_exhaustive(&f), f.tv_from_uniform(), "n={n}, k={k}");
            }
        }
    }

    #[test]
    fn junta_sampler_respects_only_accepting_pattern() {
        let f = and_junta();
        let d = SourceDistribution::JuntaTruncated(f);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let x = d.sample(&mut rng);
            assert_eq!(x.coord(1), 1);
            assert_eq!(x.coord(2), 1);
        }
    }

    #[test]
    fn parity_sampler_fixes_singleton() {
        let d = SourceDistribution::ParityTruncated(ParitySpec::new(CoordSet::new(vec![1], 5)));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            assert_eq!(d.sample(&mut rng).coord(1), 0);
        }
    }

    #[test]
    fn parity_sampler_off_support_marginal_is_fair() {
        let d = SourceDistribution::ParityTruncated(ParitySpec::new(CoordSet::new(
            vec![1, 2, 3],
            6,
        )));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 100_000;
        let ones = (0..trials)
            .filter(|_| d.sample(&mut rng).coord(4) == 1)
            .count();
        let freq = ones as f64 / trials as f64;
        assert!((0.49..=0.51).contains(&freq), "Pr[x4 = 1] = {freq}");
    }

    #[test]
    fn every_sample_satisfies_its_truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = ProblemParams::new(9, 3, rational(1, 2)).unwrap();
        let f = random_junta(&params, rational(1, 2), &mut rng);
        let df = SourceDistribution::JuntaTruncated(f.clone());
        for _ in 0..5000 {
            assert!(f.eval(&df.sample(&mut rng)));
        }
        let s = ParitySpec::new(CoordSet::new(vec![2, 4, 9], 9));
        let dp = SourceDistribution::ParityTruncated(s.clone());
        for _ in 0..5000 {
            assert_eq!(dp.sample(&mut rng).parity_on(s.coords()), 0);
        }
    }

    // The construction's per-point mass, in exact arithmetic: accepting
    // patterns are equiprobable and free coordinates are fair, so every
    // satisfying assignment gets 1 / (ones * 2^(n-k)).
    #[test]
    fn junta_sampler_induced_distribution_is_uniform_on_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [4usize, 6, 10] {
            for k in 1..=3.min(n) {
                let params = ProblemParams::new(n, k, rational(1, 4)).unwrap();
                let f = random_junta(&params, rational(3, 4), &mut rng);
                let ones = f.accepting_patterns().len() as u128;
                let per_point = rational(1, ones << (n - k));
                let sat = (0..1u64 << n)
                    .filter(|&m| f.eval(&Point::from_mask(m, n)))
                    .count() as u128;
                assert_eq!(per_point, rational(1, sat));
            }
        }
    }

    fn chi_square_vs_uniform_on_support(
        counts: &[u64],
        support: &[bool],
        trials: u64,
    ) -> (f64, f64) {
        let cells = support.iter().filter(|&&b| b).count();
        let expected = trials as f64 / cells as f64;
        let mut stat = 0.0;
        for (i, &ok) in support.iter().enumerate() {
            if ok {
                let diff = counts[i] as f64 - expected;
                stat += diff * diff / expected;
            } else {
                assert_eq!(counts[i], 0, "sample landed outside the support");
            }
        }
        let dist = ChiSquared::new((cells - 1) as f64).unwrap();
        (stat, dist.inverse_cdf(1.0 - 1e-3))
    }

    #[test]
    fn junta_sampler_passes_goodness_of_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = ProblemParams::new(8, 3, rational(1, 4)).unwrap();
        let f = random_junta(&params, rational(3, 4), &mut rng);
        let d = SourceDistribution::JuntaTruncated(f.clone());
        let n = f.ambient();
        let support: Vec<bool> = (0..1u64 << n)
            .map(|m| f.eval(&Point::from_mask(m, n)))
            .collect();
        let trials = 100_000u64;
        let mut counts = vec![0u64; 1 << n];
        for _ in 0..trials {
            counts[d.sample(&mut rng).as_mask() as usize] += 1;
        }
        let (stat, cutoff) = chi_square_vs_uniform_on_support(&counts, &support, trials);
        assert!(stat < cutoff, "chi-square {stat} exceeds cutoff {cutoff}");
    }

    #[test]
    fn parity_and_parity_as_junta_induce_the_same_distribution() {
        let coords = CoordSet::new(vec![1, 3, 4], 7);
        let spec = ParitySpec::new(coords);
        let chi = JuntaSpec::from_parity(&spec);
        let n = 7usize;

        // exact support agreement
        for m in 0..1u64 << n {
            let x = Point::from_mask(m, n);
            assert_eq!(spec.accepts(&x), chi.eval(&x));
        }

        // both samplers pass goodness of fit against the same target
        let support: Vec<bool> = (0..1u64 << n)
            .map(|m| chi.eval(&Point::from_mask(m, n)))
            .collect();
        let trials = 100_000u64;
        for (seed, d) in [
            (7u64, SourceDistribution::ParityTruncated(spec.clone())),
            (8u64, SourceDistribution::JuntaTruncated(chi.clone())),
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut counts = vec![0u64; 1 << n];
            for _ in 0..trials {
                counts[d.sample(&mut rng).as_mask() as usize] += 1;
            }
            let (stat, cutoff) = chi_square_vs_uniform_on_support(&counts, &support, trials);
            assert!(stat < cutoff, "seed {seed}: chi-square {stat} vs {cutoff}");
        }
    }

    #[test]
    fn random_junta_respects_bounds_and_seed() {
        let params = ProblemParams::new(12, 3, rational(1, 2)).unwrap();
        let max_vol = rational(1, 2);
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_junta(&params, max_vol, &mut rng);
            assert!(f.volume() <= max_vol);
            assert_eq!(f.arity(), 3);
            assert_eq!(f.ambient(), 12);
        }
        let mut a = ChaCha8Rng::seed_from_u64(99);
        let mut b = ChaCha8Rng::seed_from_u64(99);
        assert_eq!(
            random_junta(&params, max_vol, &mut a),
            random_junta(&params, max_vol, &mut b)
        );
    }

    #[test]
    fn params_validation() {
        assert!(ProblemParams::new(0, 1, rational(1, 2)).is_err());
        assert!(ProblemParams::new(4, 0, rational(1, 2)).is_err());
        assert!(ProblemParams::new(4, 5, rational(1, 2)).is_err());
        assert!(ProblemParams::new(4, 2, rational(0, 1)).is_err());
        assert!(ProblemParams::new(4, 2, rational(1, 1)).is_err());
        assert!(ProblemParams::new(4, 2, rational(1, 2)).is_ok());
    }

    #[test]
    fn record_format_examples() {
        let f = and_junta();
        assert_eq!(f.to_string(), "4 2 1,2 0001");
        let parsed: JuntaSpec = "4 2 1,2 0001".parse().unwrap();
        assert_eq!(parsed, f);

        let const_one = JuntaSpec::new(CoordSet::empty(3), vec![true]);
        assert_eq!(const_one.to_string(), "3 0 - 1");
        assert_eq!("3 0 - 1".parse::<JuntaSpec>().unwrap(), const_one);
    }

    #[test]
    fn record_parse_rejects_malformed() {
        for bad in [
            "",
            "4 2 1,2",            // missing table
            "4 2 1,2 001",        // wrong table length
            "4 2 2,1 0001",       // not increasing
            "4 2 1,1 0001",       // duplicate
            "4 2 1,5 0001",       // out of range
            "4 2 1,2 0000",       // accepts nothing
            "4 2 1,2 000x",       // bad character
            "4 1 1,2 01",         // arity mismatch
            "0 0 - 1",            // zero dimension
        ] {
            assert!(bad.parse::<JuntaSpec>().is_err(), "accepted {bad:?}");
        }
    }

    proptest! {
        #[test]
        fn record_round_trips(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 1 + (seed as usize % 12);
            let k = 1 + (seed as usize % n.min(4));
            let params = ProblemParams::new(n, k, rational(1, 2)).unwrap();
            let f = random_junta(&params, rational(1, 1) - rational(1, 1u128 << k), &mut rng);
            let parsed: JuntaSpec = f.to_string().parse().unwrap();
            prop_assert_eq!(parsed, f);
        }
    }
}
