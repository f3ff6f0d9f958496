//! Bit-packed points of the Boolean hypercube and the F2 combinatorics built
//! on them: Hamming weight, parities on coordinate sets, pattern projections,
//! weight-k enumeration, dual-subspace weight counts, and (log-)binomial
//! arithmetic.
//!
//! Coordinates are 1-based. Coordinate `i` lives at bit `(i - 1) % 64` of
//! word `(i - 1) / 64`, so for `n <= 64` the increasing numeric order of
//! single-word masks coincides with colexicographic order on coordinate
//! sets; weight-k enumeration is fixed to that order.
//!
//! Everything here is an immutable value with pure operations, safe to use
//! from any number of threads.

use std::fmt;

use rand::RngCore;

const WORD_BITS: usize = 64;

/// A point of `{0,1}^n`, identified with a vector over F2.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Point {
    words: Vec<u64>,
    dimension: usize,
}

impl Point {
    /// The all-zeros point of dimension `n`.
    pub fn zero(n: usize) -> Self {
        assert!(n >= 1, "point dimension must be positive");
        Point {
            words: vec![0; n.div_ceil(WORD_BITS)],
            dimension: n,
        }
    }

    /// Builds a point from a string of `0`/`1` characters, coordinate 1 first.
    pub fn from_bit_str(bits: &str) -> Self {
        let mut p = Point::zero(bits.len());
        for (pos, c) in bits.chars().enumerate() {
            match c {
                '0' => {}
                '1' => p.set_coord(pos + 1, 1),
                other => panic!("invalid bit character {other:?}"),
            }
        }
        p
    }

    /// Builds a point of dimension `n <= 64` whose coordinate `i` is bit
    /// `i - 1` of `mask`.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        assert!(n >= 1 && n <= 64, "mask-backed points need 1 <= n <= 64");
        assert!(
            n == 64 || mask >> n == 0,
            "mask {mask:#x} has bits above dimension {n}"
        );
        let mut p = Point::zero(n);
        p.words[0] = mask;
        p
    }

    /// Draws a uniform point: every coordinate an independent fair bit.
    pub fn random_uniform<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut p = Point::zero(n);
        for w in &mut p.words {
            *w = rng.next_u64();
        }
        p.clear_trailing_bits();
        p
    }

    fn clear_trailing_bits(&mut self) {
        let rem = self.dimension % WORD_BITS;
        if rem != 0 {
            *self.words.last_mut().unwrap() &= (1u64 << rem) - 1;
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Coordinate `i` (1-based) as 0 or 1.
    pub fn coord(&self, i: usize) -> u8 {
        assert!(
            i >= 1 && i <= self.dimension,
            "coordinate {i} out of range 1..={}",
            self.dimension
        );
        ((self.words[(i - 1) / WORD_BITS] >> ((i - 1) % WORD_BITS)) & 1) as u8
    }

    pub fn set_coord(&mut self, i: usize, value: u8) {
        assert!(
            i >= 1 && i <= self.dimension,
            "coordinate {i} out of range 1..={}",
            self.dimension
        );
        assert!(value <= 1, "coordinate value must be a bit, got {value}");
        let word = (i - 1) / WORD_BITS;
        let bit = (i - 1) % WORD_BITS;
        self.words[word] = (self.words[word] & !(1u64 << bit)) | (u64::from(value) << bit);
    }

    /// Number of nonzero coordinates.
    pub fn hamming_weight(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Sum of the coordinates in `s`, mod 2. The negated parity function on
    /// `s` accepts exactly the points where this is 0.
    pub fn parity_on(&self, s: &CoordSet) -> u8 {
        assert_eq!(
            s.ambient(),
            self.dimension,
            "coordinate set over [{}] applied to a point of dimension {}",
            s.ambient(),
            self.dimension
        );
        s.indices().iter().fold(0u8, |acc, &i| acc ^ self.coord(i))
    }

    /// Pattern index of the restriction to `s = {i1 < ... < ik}`: the integer
    /// with binary digits `(x_{i1}, ..., x_{ik})`, most significant first.
    pub fn project(&self, s: &CoordSet) -> u64 {
        assert_eq!(
            s.ambient(),
            self.dimension,
            "coordinate set over [{}] applied to a point of dimension {}",
            s.ambient(),
            self.dimension
        );
        assert!(s.len() <= 63, "pattern index would overflow u64");
        s.indices()
            .iter()
            .fold(0u64, |acc, &i| (acc << 1) | u64::from(self.coord(i)))
    }

    /// Inner product over F2.
    pub fn dot(&self, other: &Point) -> u8 {
        assert_eq!(
            self.dimension, other.dimension,
            "inner product of points with dimensions {} and {}",
            self.dimension, other.dimension
        );
        let acc = self
            .words
            .iter()
            .zip(&other.words)
            .fold(0u64, |acc, (a, b)| acc ^ (a & b));
        (acc.count_ones() & 1) as u8
    }

    /// The single-word mask backing a point of dimension `n <= 64`.
    pub fn as_mask(&self) -> u64 {
        assert!(self.dimension <= 64, "point does not fit a single word");
        self.words[0]
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 1..=self.dimension {
            write!(f, "{}", self.coord(i))?;
        }
        Ok(())
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Point({self})")
    }
}

/// A set of distinct coordinates from `[n]`, kept strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CoordSet {
    indices: Vec<usize>,
    ambient: usize,
}

impl CoordSet {
    /// Sorts `indices` and checks they are distinct and within `1..=ambient`.
    pub fn new(mut indices: Vec<usize>, ambient: usize) -> Self {
        assert!(ambient >= 1, "ambient dimension must be positive");
        indices.sort_unstable();
        for pair in indices.windows(2) {
            assert!(pair[0] < pair[1], "duplicate coordinate {}", pair[0]);
        }
        if let Some(&first) = indices.first() {
            assert!(first >= 1, "coordinates are 1-based, got {first}");
        }
        if let Some(&last) = indices.last() {
            assert!(last <= ambient, "coordinate {last} exceeds ambient {ambient}");
        }
        CoordSet { indices, ambient }
    }

    pub fn empty(ambient: usize) -> Self {
        CoordSet::new(Vec::new(), ambient)
    }

    /// The set whose members are the 1-bits of `mask` (bit `i - 1` marks
    /// coordinate `i`).
    pub fn from_mask(mut mask: u64, ambient: usize) -> Self {
        assert!(ambient <= 64, "mask-backed sets need ambient <= 64");
        assert!(
            ambient == 64 || mask >> ambient == 0,
            "mask {mask:#x} has bits above ambient {ambient}"
        );
        let mut indices = Vec::with_capacity(mask.count_ones() as usize);
        while mask != 0 {
            indices.push(mask.trailing_zeros() as usize + 1);
            mask &= mask - 1;
        }
        CoordSet { indices, ambient }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Indicator mask of the set; requires `ambient <= 64`.
    pub fn mask(&self) -> u64 {
        assert!(self.ambient <= 64, "set does not fit a single word");
        self.indices.iter().fold(0u64, |m, &i| m | (1u64 << (i - 1)))
    }
}

/// One draw of random generators together with the number of weight-k points
/// orthogonal to all of them (the weight-k count of the dual subspace).
#[derive(Clone, Debug)]
pub struct SubspaceTrial {
    pub generators: Vec<Point>,
    pub k: usize,
    pub w: u64,
}

/// Iterates the `C(n, k)` single-word masks of Hamming weight `k` in
/// increasing numeric order, i.e. colexicographically on coordinate sets.
pub fn weight_k_masks(n: usize, k: usize) -> WeightKMasks {
    assert!(n >= 1 && n <= 64, "weight-k enumeration needs 1 <= n <= 64, got n = {n}");
    assert!(k <= n, "weight k = {k} exceeds dimension n = {n}");
    let first = match k {
        0 => 0,
        64 => u64::MAX,
        _ => (1u64 << k) - 1,
    };
    WeightKMasks {
        next: Some(first),
        n: n as u32,
    }
}

pub struct WeightKMasks {
    next: Option<u64>,
    n: u32,
}

impl Iterator for WeightKMasks {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        let cur = self.next?;
        self.next = gosper_next(cur, self.n);
        Some(cur)
    }
}

// Gosper's hack: the numerically next mask with the same popcount, or None
// once it leaves the n-bit range.
fn gosper_next(mask: u64, n: u32) -> Option<u64> {
    if mask == 0 {
        return None;
    }
    let low = mask & mask.wrapping_neg();
    let carry = mask.checked_add(low)?;
    let next = carry + (((carry ^ mask) / low) >> 2);
    if n < 64 && next >> n != 0 {
        None
    } else {
        Some(next)
    }
}

/// Yields the `C(n, k)` points of Hamming weight `k`, each exactly once, in
/// the fixed colexicographic order of [`weight_k_masks`].
pub fn enumerate_weight_k(n: usize, k: usize) -> impl Iterator<Item = Point> {
    weight_k_masks(n, k).map(move |m| Point::from_mask(m, n))
}

/// Counts the weight-`k` points orthogonal over F2 to every generator, by
/// scanning the weight-`k` enumeration.
pub fn dual_weight_count(n: usize, generators: &[Point], k: usize) -> u64 {
    for g in generators {
        assert_eq!(
            g.dimension(),
            n,
            "generator of dimension {} in a dual count over dimension {n}",
            g.dimension()
        );
    }
    let masks: Vec<u64> = generators.iter().map(Point::as_mask).collect();
    weight_k_masks(n, k)
        .filter(|&x| masks.iter().all(|&g| (g & x).count_ones() & 1 == 0))
        .count() as u64
}

/// Exact binomial coefficient.
pub fn binom(n: u64, k: u64) -> u128 {
    assert!(k <= n, "binom: k = {k} exceeds n = {n}");
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 1..=k {
        // every prefix is itself a binomial coefficient, so the division is exact
        acc = acc
            .checked_mul((n - k + j) as u128)
            .expect("binomial coefficient overflows u128")
            / j as u128;
    }
    acc
}

/// `log2 C(n, k)` as the compensated sum of per-factor logs
/// `log2(n - j + 1) - log2(j)` for `j = 1..=k`.
pub fn log2_binom(n: u64, k: u64) -> f64 {
    assert!(k <= n, "log2_binom: k = {k} exceeds n = {n}");
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for j in 1..=k {
        let term = ((n - j + 1) as f64).log2() - (j as f64).log2();
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}
