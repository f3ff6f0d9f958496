//! Exact rational arithmetic for volumes, distance parameters, and decision
//! thresholds. No floating comparison ever decides set membership or a
//! tester verdict where the contract calls for exactness.

use num_rational::Ratio;

/// Exact nonnegative rational with `u128` numerator and denominator.
pub type Rational = Ratio<u128>;

/// Shorthand constructor; reduces to lowest terms.
pub fn rational(numer: u128, denom: u128) -> Rational {
    Ratio::new(numer, denom)
}

/// Renders a rational as `p/q`, always with an explicit denominator so CSV
/// fields round-trip unambiguously.
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses a `p/q` string (as accepted by the CLI `--eps` flag).
pub fn parse_rational(s: &str) -> Result<Rational, String> {
    let (p, q) = s
        .split_once('/')
        .ok_or_else(|| format!("expected a rational like 1/2, got {s:?}"))?;
    let numer: u128 = p
        .trim()
        .parse()
        .map_err(|e| format!("bad numerator in {s:?}: {e}"))?;
    let denom: u128 = q
        .trim()
        .parse()
        .map_err(|e| format!("bad denominator in {s:?}: {e}"))?;
    if denom == 0 {
        return Err(format!("zero denominator in {s:?}"));
    }
    Ok(Ratio::new(numer, denom))
}

/// Nearest `f64` to the rational; used only where the consumer is itself a
/// floating-point formula (budgets, collision thresholds).
pub fn rational_to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}
