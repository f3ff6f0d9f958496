//! Deterministic experiment runner behind the `trunctest` CLI.
//!
//! Every trial is seeded by `split(master_seed, trial_index)`, so records
//! are independent of execution order and thread count, and rerunning a
//! config reproduces its output files byte for byte. Trial timings are
//! opt-in (`timings`) because wall-clock values would break that contract;
//! with timings off the `elapsed_ns` column is 0.
//!
//! Budgets are computed and validated against the sample cap before any
//! sample is drawn; a violation is a refusal naming the term that exploded,
//! never a silent truncation.

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::distributions::{
    random_coord_set, random_junta, JuntaSpec, ParitySpec, ProblemParams, SourceDistribution,
    MAX_RANDOM_JUNTA_ARITY,
};
use crate::f2::{CoordSet, Point};
use crate::mle::{decision_threshold, mle_sample_size, mle_trial, subspace_trial};
use crate::rational::{format_rational, rational, Rational};
use crate::testers::{
    budget_consistent_real, budget_uniformity, budget_uniformity_real, calibrate_from_counts,
    collision_count, consistent_junta_check_detailed, junta_uniformity_test_detailed, Amplify,
    CalibrationOutcome, SampleBudget, Verdict,
};

use num_traits::One;

pub const DEFAULT_SAMPLE_CAP: u64 = 100_000_000;
pub const DEFAULT_C2: f64 = 4.0;
pub const DEFAULT_CALIBRATION_TRIALS: u64 = 100_000;

/// Child seed for a trial: one SplitMix64 step at stream position `index`.
/// Injective in `index` for a fixed master seed, with full avalanche.
pub fn split(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Consistent,
    Uniformity,
    LowerboundMoments,
    LowerboundMle,
    Calibrate,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Mode::Consistent => "consistent",
            Mode::Uniformity => "uniformity",
            Mode::LowerboundMoments => "lowerbound-moments",
            Mode::LowerboundMle => "lowerbound-mle",
            Mode::Calibrate => "calibrate",
        };
        write!(f, "{name}")
    }
}

/// What each trial samples from.
#[derive(Clone, Debug)]
pub enum SourceSpec {
    Uniform,
    /// A pinned junta instance.
    Junta(JuntaSpec),
    /// A pinned parity support (1-based coordinates).
    Parity(Vec<usize>),
    /// A fresh random junta per trial, with volume at most `1 - eps`.
    RandomJunta,
    /// A fresh random size-k parity support per trial.
    RandomParity,
}

impl Serialize for SourceSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SourceSpec::Uniform => s.serialize_str("uniform"),
            SourceSpec::Junta(j) => {
                let mut map = s.serialize_map(Some(1))?;
                map.serialize_entry("junta", &j.to_string())?;
                map.end()
            }
            SourceSpec::Parity(coords) => {
                let mut map = s.serialize_map(Some(1))?;
                map.serialize_entry("parity", coords)?;
                map.end()
            }
            SourceSpec::RandomJunta => s.serialize_str("random-junta"),
            SourceSpec::RandomParity => s.serialize_str("random-parity"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaChoice {
    Fixed(f64),
    Calibrated,
}

impl Serialize for AlphaChoice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AlphaChoice::Fixed(a) => s.serialize_f64(*a),
            AlphaChoice::Calibrated => s.serialize_str("calibrated"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

fn serialize_rational<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(r))
}

/// Full description of one experiment. The `out` path and `threads` count
/// are execution knobs, not part of the experiment, and are excluded from
/// the JSON provenance echo so thread count never shows up in output files.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub n: usize,
    pub k: usize,
    #[serde(serialize_with = "serialize_rational")]
    pub eps: Rational,
    pub trials: u64,
    pub master_seed: u64,
    pub c2: f64,
    pub alpha: AlphaChoice,
    pub amplify: Amplify,
    pub source: SourceSpec,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    #[serde(skip_serializing)]
    pub threads: usize,
    pub sample_cap: u64,
    pub calibration_trials: u64,
    pub timings: bool,
}

impl ExperimentConfig {
    pub fn new(mode: Mode, n: usize, k: usize, eps: Rational) -> Self {
        ExperimentConfig {
            mode,
            n,
            k,
            eps,
            trials: 100,
            master_seed: 0,
            c2: DEFAULT_C2,
            alpha: AlphaChoice::Fixed(2.0),
            amplify: Amplify::None,
            source: SourceSpec::Uniform,
            out: None,
            format: OutputFormat::Csv,
            threads: 0,
            sample_cap: DEFAULT_SAMPLE_CAP,
            calibration_trials: DEFAULT_CALIBRATION_TRIALS,
            timings: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config refused: {0}")]
    Config(String),
    #[error("budget refused: {0}")]
    Budget(String),
    #[error("output path {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One output row. `statistic` is the mode's per-trial count: the minimum
/// distinct-pattern count (consistent), the witness collision count
/// (uniformity), the dual weight-k count `w` (moments), the
/// parity-consistent count (mle), or the null collision count (calibrate).
#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub seed: u64,
    pub source: String,
    pub t: u64,
    pub statistic: u64,
    pub threshold: String,
    pub verdict: String,
    pub elapsed_ns: u64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ExperimentSummary {
    Consistent {
        trials: u64,
        truncated: u64,
        truncated_rate: f64,
        t: u64,
        threshold: String,
    },
    Uniformity {
        trials: u64,
        truncated: u64,
        truncated_rate: f64,
        t: u64,
        delta: String,
        alpha: f64,
        threshold: f64,
    },
    #[serde(rename = "lowerbound-moments")]
    LowerboundMoments {
        trials: u64,
        t: u64,
        mean_w: f64,
        second_moment_w: f64,
        p_w_geq_1: f64,
        exact_expectation: String,
    },
    #[serde(rename = "lowerbound-mle")]
    LowerboundMle {
        trials: u64,
        truncated: u64,
        truncated_rate: f64,
        t: u64,
        threshold: String,
        identity_mismatches: u64,
    },
    Calibrate {
        trials: u64,
        m: u64,
        t: u64,
        delta: String,
        quantile: u64,
        alpha: f64,
        threshold: f64,
    },
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub summary: ExperimentSummary,
    pub records: Vec<TrialRecord>,
}

// Everything derived from the config before the first sample is drawn.
struct Plan {
    params: ProblemParams,
    /// Samples (or draws) per trial.
    t: u64,
    budget: Option<SampleBudget>,
    /// Resolved uniformity threshold constant.
    alpha: f64,
    m: u64,
    threshold_str: String,
    source_tag: String,
}

fn refuse(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn junta_digest(spec: &JuntaSpec) -> String {
    format!("junta:{:016x}", fnv1a64(spec.to_string().as_bytes()))
}

fn parity_digest(n: usize, coords: &[usize]) -> String {
    let canon = format!(
        "parity {n} {}",
        coords
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    format!("parity:{:016x}", fnv1a64(canon.as_bytes()))
}

fn check_consistent_budget(cfg: &ExperimentConfig, params: &ProblemParams) -> Result<u64, HarnessError> {
    let real = budget_consistent_real(params);
    if !real.is_finite() || real > cfg.sample_cap as f64 {
        let pow = (1u128 << params.k) as f64;
        let log_c = crate::f2::log2_binom(params.n as u64, params.k as u64);
        let rate = -(1.0 - params.eps_f64()).log2();
        let blame = if rate < 1e-3 {
            "the log2(1/(1-eps)) denominator vanished"
        } else if pow >= log_c {
            "the 2^k term dominates"
        } else {
            "the log2 C(n,k) term dominates"
        };
        return Err(HarnessError::Budget(format!(
            "consistent budget ceil(100 (2^k + log2 C(n,k)) / log2(1/(1-eps))) = {real:.4e} \
             exceeds the sample cap {} ({blame}: 2^k = {pow}, log2 C(n,k) = {log_c:.4}, \
             log2(1/(1-eps)) = {rate:.4e})",
            cfg.sample_cap
        )));
    }
    Ok(real.ceil() as u64)
}

fn check_uniformity_budget(
    cfg: &ExperimentConfig,
    params: &ProblemParams,
) -> Result<SampleBudget, HarnessError> {
    let real = budget_uniformity_real(params, cfg.c2);
    if !real.is_finite() || real > cfg.sample_cap as f64 {
        let eps = params.eps_f64();
        let log_c = crate::f2::log2_binom(params.n as u64, params.k as u64);
        let root_term = 2f64.powf(params.k as f64 / 2.0) * log_c.sqrt();
        let blame = if root_term >= log_c {
            "the 2^(k/2) sqrt(log2 C(n,k)) term dominates"
        } else {
            "the log2 C(n,k) term dominates"
        };
        return Err(HarnessError::Budget(format!(
            "uniformity budget ceil((c2/eps^2)(2^(k/2) sqrt(log2 C(n,k)) + log2 C(n,k))) = {real:.4e} \
             exceeds the sample cap {} ({blame}; c2/eps^2 = {:.4e})",
            cfg.sample_cap,
            cfg.c2 / (eps * eps)
        )));
    }
    Ok(budget_uniformity(params, cfg.c2))
}

fn validate_parity_coords(n: usize, k: usize, coords: &[usize]) -> Result<CoordSet, HarnessError> {
    if coords.is_empty() {
        return Err(refuse("parity support must be nonempty"));
    }
    let mut sorted = coords.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != coords.len() {
        return Err(refuse("parity support has duplicate coordinates"));
    }
    if sorted[0] < 1 || *sorted.last().unwrap() > n {
        return Err(refuse(format!("parity coordinates must lie in 1..={n}")));
    }
    if sorted.len() > k {
        return Err(refuse(format!(
            "parity support size {} exceeds the junta arity k = {k}",
            sorted.len()
        )));
    }
    Ok(CoordSet::new(sorted, n))
}

fn validate_source(cfg: &ExperimentConfig, params: &ProblemParams) -> Result<String, HarnessError> {
    let one_minus_eps = Rational::one() - params.eps;
    match &cfg.source {
        SourceSpec::Uniform => Ok("uniform".to_string()),
        SourceSpec::Junta(spec) => {
            if spec.ambient() != params.n {
                return Err(refuse(format!(
                    "junta instance lives in dimension {}, config says n = {}",
                    spec.ambient(),
                    params.n
                )));
            }
            if spec.arity() > params.k {
                return Err(refuse(format!(
                    "junta instance arity {} exceeds k = {}",
                    spec.arity(),
                    params.k
                )));
            }
            if spec.volume() > one_minus_eps {
                return Err(refuse(format!(
                    "junta instance volume {} exceeds 1 - eps = {}",
                    format_rational(&spec.volume()),
                    format_rational(&one_minus_eps)
                )));
            }
            Ok(junta_digest(spec))
        }
        SourceSpec::Parity(coords) => {
            let set = validate_parity_coords(params.n, params.k, coords)?;
            if rational(1, 2) > one_minus_eps {
                return Err(refuse(format!(
                    "parity truncations have volume 1/2, which exceeds 1 - eps = {}",
                    format_rational(&one_minus_eps)
                )));
            }
            Ok(parity_digest(params.n, set.indices()))
        }
        SourceSpec::RandomJunta => {
            if params.k > MAX_RANDOM_JUNTA_ARITY {
                return Err(refuse(format!(
                    "random junta sources support k <= {MAX_RANDOM_JUNTA_ARITY}"
                )));
            }
            if one_minus_eps < rational(1, 1u128 << params.k) {
                return Err(refuse(format!(
                    "1 - eps = {} is below 2^-k: no junta of arity {} fits the volume bound",
                    format_rational(&one_minus_eps),
                    params.k
                )));
            }
            Ok(String::new()) // tagged per trial
        }
        SourceSpec::RandomParity => {
            if rational(1, 2) > one_minus_eps {
                return Err(refuse(format!(
                    "parity truncations have volume 1/2, which exceeds 1 - eps = {}",
                    format_rational(&one_minus_eps)
                )));
            }
            Ok(String::new()) // tagged per trial
        }
    }
}

fn prepare(cfg: &ExperimentConfig) -> Result<Plan, HarnessError> {
    let params = ProblemParams::new(cfg.n, cfg.k, cfg.eps)
        .map_err(|e| refuse(e.to_string()))?;
    if params.n > 64 {
        return Err(refuse(format!(
            "subset enumeration over [n] requires n <= 64, got n = {}",
            params.n
        )));
    }
    if params.k > 63 {
        return Err(refuse("k = 64 is unsupported: pattern indices exceed u64"));
    }
    if *params.eps.denom() > 1u128 << 32 {
        return Err(refuse(
            "eps denominator too large for exact threshold arithmetic (limit 2^32)",
        ));
    }
    if cfg.trials < 1 {
        return Err(refuse("trials must be at least 1"));
    }

    let m = 1u64 << params.k;
    match cfg.mode {
        Mode::Consistent => {
            let source_tag = validate_source(cfg, &params)?;
            let t = check_consistent_budget(cfg, &params)?;
            let threshold =
                (Rational::one() - params.eps) * Rational::from_integer(1u128 << params.k);
            Ok(Plan {
                params,
                t,
                budget: None,
                alpha: 0.0,
                m,
                threshold_str: format_rational(&threshold),
                source_tag,
            })
        }
        Mode::Uniformity => {
            let source_tag = validate_source(cfg, &params)?;
            let budget = check_uniformity_budget(cfg, &params)?;
            let t = budget.uniformity;
            if cfg.amplify == Amplify::Median && t < 18 {
                return Err(refuse(format!(
                    "median amplification needs a budget of at least 18 samples, got {t}"
                )));
            }
            let alpha = match cfg.alpha {
                AlphaChoice::Fixed(a) => {
                    if a <= 0.0 {
                        return Err(refuse(format!("alpha must be positive, got {a}")));
                    }
                    a
                }
                AlphaChoice::Calibrated => {
                    if cfg.calibration_trials < 1000 {
                        return Err(refuse(
                            "calibration needs at least 1000 trials (the quantile is too noisy below that)",
                        ));
                    }
                    // reserved seed indices, descending from u64::MAX so they
                    // never collide with trial indices
                    let mut counts = null_collision_counts(m, t, cfg.calibration_trials, |j| {
                        split(cfg.master_seed, u64::MAX - j)
                    });
                    let outcome = calibrate_from_counts(
                        &mut counts,
                        m,
                        params.eps_f64(),
                        t,
                        budget.delta,
                    );
                    if outcome.alpha <= 0.0 {
                        return Err(refuse(format!(
                            "calibrated alpha {} is not positive; delta {} is too lax for this budget",
                            outcome.alpha,
                            format_rational(&budget.delta)
                        )));
                    }
                    outcome.alpha
                }
            };
            let u = crate::testers::UniformityParams::new(m, params.eps_f64(), alpha);
            let threshold_str = fmt_f64(u.threshold(t));
            Ok(Plan {
                params,
                t,
                budget: Some(budget),
                alpha,
                m,
                threshold_str,
                source_tag,
            })
        }
        Mode::LowerboundMoments | Mode::LowerboundMle => {
            if !matches!(cfg.source, SourceSpec::Uniform) {
                return Err(refuse(format!(
                    "mode {} draws uniform samples by definition; --source must be uniform",
                    cfg.mode
                )));
            }
            let t = mle_sample_size(params.n, params.k);
            if t > cfg.sample_cap {
                return Err(HarnessError::Budget(format!(
                    "sample count ceil(log2 C(n,k)) = {t} exceeds the sample cap {}",
                    cfg.sample_cap
                )));
            }
            let threshold = decision_threshold(params.n, params.k, t);
            Ok(Plan {
                params,
                t,
                budget: None,
                alpha: 0.0,
                m,
                threshold_str: format_rational(&threshold),
                source_tag: "uniform".to_string(),
            })
        }
        Mode::Calibrate => {
            if !matches!(cfg.source, SourceSpec::Uniform) {
                return Err(refuse(
                    "calibration simulates the uniform null; --source must be uniform",
                ));
            }
            if cfg.trials < 1000 {
                return Err(refuse(
                    "calibration needs at least 1000 trials (the quantile is too noisy below that)",
                ));
            }
            let budget = check_uniformity_budget(cfg, &params)?;
            let t = budget.uniformity;
            Ok(Plan {
                params,
                t,
                budget: Some(budget),
                alpha: 0.0,
                m,
                threshold_str: String::new(), // known only after calibration
                source_tag: "uniform".to_string(),
            })
        }
    }
}

/// 17-significant-digit scientific form; round-trips f64 exactly.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn null_collision_counts(
    m: u64,
    t: u64,
    trials: u64,
    seed_of: impl Fn(u64) -> u64 + Sync,
) -> Vec<u64> {
    (0..trials)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed_of(j));
            let indices: Vec<u64> = (0..t).map(|_| rng.random_range(0..m)).collect();
            collision_count(&indices)
        })
        .collect()
}

struct TrialEval {
    record: TrialRecord,
    mle_mismatch: bool,
}

fn trial_source(
    cfg: &ExperimentConfig,
    plan: &Plan,
    rng: &mut ChaCha8Rng,
) -> (SourceDistribution, String) {
    match &cfg.source {
        SourceSpec::Uniform => (
            SourceDistribution::Uniform { n: plan.params.n },
            plan.source_tag.clone(),
        ),
        SourceSpec::Junta(spec) => (
            SourceDistribution::JuntaTruncated(spec.clone()),
            plan.source_tag.clone(),
        ),
        SourceSpec::Parity(coords) => {
            let set = CoordSet::new(coords.clone(), plan.params.n);
            (
                SourceDistribution::ParityTruncated(ParitySpec::new(set)),
                plan.source_tag.clone(),
            )
        }
        SourceSpec::RandomJunta => {
            let max_vol = Rational::one() - plan.params.eps;
            let f = random_junta(&plan.params, max_vol, rng);
            let tag = junta_digest(&f);
            (SourceDistribution::JuntaTruncated(f), tag)
        }
        SourceSpec::RandomParity => {
            let set = random_coord_set(plan.params.n, plan.params.k, rng);
            let tag = parity_digest(plan.params.n, set.indices());
            (
                SourceDistribution::ParityTruncated(ParitySpec::new(set)),
                tag,
            )
        }
    }
}

fn run_trial(cfg: &ExperimentConfig, plan: &Plan, index: u64) -> TrialEval {
    let seed = split(cfg.master_seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let started = cfg.timings.then(Instant::now);

    let mut mle_mismatch = false;
    let (source_tag, statistic, threshold, verdict): (String, u64, String, String) =
        match cfg.mode {
            Mode::Consistent => {
                let (source, tag) = trial_source(cfg, plan, &mut rng);
                let samples: Vec<Point> = (0..plan.t).map(|_| source.sample(&mut rng)).collect();
                let outcome = consistent_junta_check_detailed(&samples, &plan.params);
                (
                    tag,
                    outcome.min_distinct,
                    plan.threshold_str.clone(),
                    outcome.verdict.to_string(),
                )
            }
            Mode::Uniformity => {
                let (source, tag) = trial_source(cfg, plan, &mut rng);
                let samples: Vec<Point> = (0..plan.t).map(|_| source.sample(&mut rng)).collect();
                let outcome = junta_uniformity_test_detailed(
                    &samples,
                    &plan.params,
                    plan.budget.as_ref().unwrap(),
                    plan.alpha,
                    cfg.amplify,
                );
                (
                    tag,
                    outcome.collisions,
                    plan.threshold_str.clone(),
                    outcome.verdict.to_string(),
                )
            }
            Mode::LowerboundMoments => {
                let trial = subspace_trial(plan.params.n, plan.params.k, plan.t, &mut rng);
                (
                    plan.source_tag.clone(),
                    trial.w,
                    plan.threshold_str.clone(),
                    String::new(),
                )
            }
            Mode::LowerboundMle => {
                let outcome = mle_trial(plan.params.n, plan.params.k, plan.t, &mut rng);
                mle_mismatch = outcome.mismatch;
                let verdict = if outcome.flagged {
                    Verdict::Truncated
                } else {
                    Verdict::Untruncated
                };
                (
                    plan.source_tag.clone(),
                    outcome.count,
                    plan.threshold_str.clone(),
                    verdict.to_string(),
                )
            }
            Mode::Calibrate => unreachable!("calibrate trials run through run_calibrate"),
        };

    let elapsed_ns = started.map_or(0, |s| s.elapsed().as_nanos() as u64);
    TrialEval {
        record: TrialRecord {
            trial_index: index,
            seed,
            source: source_tag,
            t: plan.t,
            statistic,
            threshold,
            verdict,
            elapsed_ns,
        },
        mle_mismatch,
    }
}

fn run_calibrate(
    cfg: &ExperimentConfig,
    plan: &Plan,
) -> (Vec<TrialRecord>, CalibrationOutcome) {
    let per_trial: Vec<(u64, u64, u64)> = (0..cfg.trials)
        .into_par_iter()
        .map(|index| {
            let seed = split(cfg.master_seed, index);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let started = cfg.timings.then(Instant::now);
            let indices: Vec<u64> = (0..plan.t).map(|_| rng.random_range(0..plan.m)).collect();
            let count = collision_count(&indices);
            let elapsed_ns = started.map_or(0, |s| s.elapsed().as_nanos() as u64);
            (seed, count, elapsed_ns)
        })
        .collect();

    let mut counts: Vec<u64> = per_trial.iter().map(|&(_, c, _)| c).collect();
    let budget = plan.budget.as_ref().unwrap();
    let outcome = calibrate_from_counts(
        &mut counts,
        plan.m,
        plan.params.eps_f64(),
        plan.t,
        budget.delta,
    );
    let threshold_str = fmt_f64(outcome.threshold);
    let records = per_trial
        .into_iter()
        .enumerate()
        .map(|(i, (seed, count, elapsed_ns))| TrialRecord {
            trial_index: i as u64,
            seed,
            source: plan.source_tag.clone(),
            t: plan.t,
            statistic: count,
            threshold: threshold_str.clone(),
            verdict: String::new(),
            elapsed_ns,
        })
        .collect();
    (records, outcome)
}

fn with_pool<T: Send>(
    threads: usize,
    f: impl FnOnce() -> T + Send,
) -> Result<T, HarnessError> {
    if threads == 0 {
        Ok(f())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| refuse(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// Runs every trial of the config and writes the rendered table to
/// `cfg.out` when set. Identical configs produce identical outputs at any
/// thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let plan = with_pool(cfg.threads, || prepare(cfg))??;

    let (records, summary) = with_pool(cfg.threads, || match cfg.mode {
        Mode::Calibrate => {
            let (records, cal) = run_calibrate(cfg, &plan);
            let budget = plan.budget.as_ref().unwrap();
            let summary = ExperimentSummary::Calibrate {
                trials: cfg.trials,
                m: plan.m,
                t: plan.t,
                delta: format_rational(&budget.delta),
                quantile: cal.quantile,
                alpha: cal.alpha,
                threshold: cal.threshold,
            };
            (records, summary)
        }
        _ => {
            let evals: Vec<TrialEval> = (0..cfg.trials)
                .into_par_iter()
                .map(|i| run_trial(cfg, &plan, i))
                .collect();
            let truncated = evals
                .iter()
                .filter(|e| e.record.verdict == "truncated")
                .count() as u64;
            let truncated_rate = truncated as f64 / cfg.trials as f64;
            let summary = match cfg.mode {
                Mode::Consistent => ExperimentSummary::Consistent {
                    trials: cfg.trials,
                    truncated,
                    truncated_rate,
                    t: plan.t,
                    threshold: plan.threshold_str.clone(),
                },
                Mode::Uniformity => {
                    let budget = plan.budget.as_ref().unwrap();
                    ExperimentSummary::Uniformity {
                        trials: cfg.trials,
                        truncated,
                        truncated_rate,
                        t: plan.t,
                        delta: format_rational(&budget.delta),
                        alpha: plan.alpha,
                        threshold: plan.threshold_str.parse().unwrap_or(f64::NAN),
                    }
                }
                Mode::LowerboundMoments => {
                    let trials = cfg.trials as f64;
                    let mean_w = evals
                        .iter()
                        .map(|e| e.record.statistic as f64)
                        .sum::<f64>()
                        / trials;
                    let second_moment_w = evals
                        .iter()
                        .map(|e| {
                            let w = e.record.statistic as f64;
                            w * w
                        })
                        .sum::<f64>()
                        / trials;
                    let p_w_geq_1 = evals
                        .iter()
                        .filter(|e| e.record.statistic >= 1)
                        .count() as f64
                        / trials;
                    ExperimentSummary::LowerboundMoments {
                        trials: cfg.trials,
                        t: plan.t,
                        mean_w,
                        second_moment_w,
                        p_w_geq_1,
                        exact_expectation: plan.threshold_str.clone(),
                    }
                }
                Mode::LowerboundMle => ExperimentSummary::LowerboundMle {
                    trials: cfg.trials,
                    truncated,
                    truncated_rate,
                    t: plan.t,
                    threshold: plan.threshold_str.clone(),
                    identity_mismatches: evals.iter().filter(|e| e.mle_mismatch).count() as u64,
                },
                Mode::Calibrate => unreachable!(),
            };
            (evals.into_iter().map(|e| e.record).collect(), summary)
        }
    })?;

    let output = ExperimentOutput { summary, records };
    if let Some(path) = &cfg.out {
        let rendered = render(cfg, &output);
        fs::write(path, rendered).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    Ok(output)
}

/// Renders the output in the config's format.
pub fn render(cfg: &ExperimentConfig, output: &ExperimentOutput) -> String {
    match cfg.format {
        OutputFormat::Csv => render_csv(&output.records),
        OutputFormat::Json => render_json(cfg, output),
    }
}

pub fn render_csv(records: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str("trial_index,seed,source,t,statistic,threshold,verdict,elapsed_ns\n");
    for r in records {
        debug_assert!(!r.source.contains(','), "source tags must stay comma-free");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.trial_index, r.seed, r.source, r.t, r.statistic, r.threshold, r.verdict, r.elapsed_ns
        ));
    }
    out
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    config: &'a ExperimentConfig,
    summary: &'a ExperimentSummary,
    trials: &'a [TrialRecord],
}

pub fn render_json(cfg: &ExperimentConfig, output: &ExperimentOutput) -> String {
    let doc = JsonDocument {
        config: cfg,
        summary: &output.summary,
        trials: &output.records,
    };
    let mut s = serde_json::to_string(&doc).expect("experiment output serializes");
    s.push('\n');
    s
}

/// The summary as a single JSON line.
pub fn render_summary(summary: &ExperimentSummary) -> String {
    serde_json::to_string(summary).expect("summary serializes")
}
