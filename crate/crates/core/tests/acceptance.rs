//! Acceptance suite: every quantitative guarantee the project makes, each as
//! one test that prints a PASS/FAIL line.
//!
//! Run with:
//!   cargo test -p trunctest-core --test acceptance -- --nocapture
//!
//! Criteria 1, 2, 4, 7, 8 drive the experiment harness end to end; 3, 5, 6
//! are exact library-level checks against independent oracles; 9 reruns all
//! of them at 1 and 8 worker threads and demands byte-identical output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use trunctest_core::distributions::ProblemParams;
use trunctest_core::f2::{dual_weight_count, weight_k_masks, CoordSet, Point};
use trunctest_core::harness::{
    run_experiment, split, AlphaChoice, ExperimentConfig, ExperimentSummary, Mode, OutputFormat,
    SourceSpec,
};
use trunctest_core::mle::{parity_consistent_count, MleInstance};
use trunctest_core::rational::{format_rational, rational, Rational};
use trunctest_core::testers::{collision_count, consistent_junta_check, Verdict};

use num_traits::One;

const SEED_C1: u64 = 20260801;
const SEED_C2: u64 = 20260802;
const SEED_C3: u64 = 20260803;
const SEED_C4: u64 = 20260804;
const SEED_C5: u64 = 20260805;
const SEED_C6: u64 = 20260806;
const SEED_C7: u64 = 20260807;
const SEED_C8: u64 = 20260808;

fn report(id: &str, ok: bool, detail: &str) {
    println!("ACCEPTANCE {id}: {} - {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "ACCEPTANCE {id} FAIL - {detail}");
}

// ---------------------------------------------------------------- configs

fn c1_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Mode::Consistent, 16, 3, rational(1, 2));
    cfg.trials = 100;
    cfg.master_seed = SEED_C1;
    cfg.source = SourceSpec::RandomJunta;
    cfg
}

fn c2_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Mode::Consistent, 16, 3, rational(1, 2));
    cfg.trials = 200;
    cfg.master_seed = SEED_C2;
    cfg
}

fn c4_cfg(source: SourceSpec) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Mode::Uniformity, 10, 2, rational(1, 2));
    cfg.trials = 200;
    cfg.master_seed = SEED_C4;
    cfg.c2 = 4.0;
    cfg.alpha = AlphaChoice::Calibrated;
    cfg.source = source;
    cfg
}

fn c7_cfg(n: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Mode::LowerboundMoments, n, 1, rational(1, 2));
    cfg.trials = 100_000;
    cfg.master_seed = SEED_C7;
    cfg
}

fn c8_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Mode::LowerboundMle, 8, 1, rational(1, 2));
    cfg.trials = 100_000;
    cfg.master_seed = SEED_C8;
    cfg
}

// ------------------------------------------------------------- criterion 1

#[test]
fn criterion_1_consistent_flags_every_truncated_instance() {
    let out = run_experiment(&c1_cfg()).unwrap();
    let (truncated, rate, t) = match out.summary {
        ExperimentSummary::Consistent {
            truncated,
            truncated_rate,
            t,
            ..
        } => (truncated, truncated_rate, t),
        _ => unreachable!(),
    };
    report(
        "1",
        truncated == 100 && rate == 1.0,
        &format!("100 random juntas (n=16, k=3, vol <= 1/2, t={t}): flagged {truncated}/100"),
    );
}

// ------------------------------------------------------------- criterion 2

#[test]
fn criterion_2_consistent_false_positive_rate_on_uniform() {
    let out = run_experiment(&c2_cfg()).unwrap();
    let rate = match out.summary {
        ExperimentSummary::Consistent { truncated_rate, .. } => truncated_rate,
        _ => unreachable!(),
    };
    report(
        "2",
        rate <= 0.05,
        &format!("uniform source (n=16, k=3, 200 trials): flagged rate {rate}"),
    );
}

// ------------------------------------------------------------- criterion 3

// Independent oracle: enumerate every size-k support and every nonzero truth
// table, filter by volume, and test consistency sample by sample. Table
// enumeration is exhaustive, so the pattern-bit convention cancels out.
fn oracle_consistent_exists(samples: &[Point], n: usize, k: usize, eps: Rational) -> bool {
    let max_accept = (Rational::one() - eps) * Rational::from_integer(1u128 << k);
    for support_mask in weight_k_masks(n, k) {
        let support = CoordSet::from_mask(support_mask, n);
        let indices = support.indices();
        for table in 1u64..(1u64 << (1usize << k)) {
            if Rational::from_integer(u128::from(table.count_ones())) > max_accept {
                continue;
            }
            let consistent = samples.iter().all(|x| {
                let pattern = indices
                    .iter()
                    .fold(0usize, |acc, &i| (acc << 1) | x.coord(i) as usize);
                (table >> pattern) & 1 == 1
            });
            if consistent {
                return true;
            }
        }
    }
    false
}

struct OracleEquivalence {
    lines: String,
    disagreements: u64,
    truncated_seen: u64,
    untruncated_seen: u64,
}

fn oracle_equivalence_report() -> OracleEquivalence {
    let mut configs = Vec::new();
    for n in 1..=6usize {
        for k in 1..=n.min(2) {
            for eps in [rational(1, 4), rational(1, 2)] {
                configs.push((n, k, eps));
            }
        }
    }
    let per_config: Vec<(String, u64, u64, u64)> = configs
        .par_iter()
        .enumerate()
        .map(|(ci, &(n, k, eps))| {
            let params = ProblemParams::new(n, k, eps).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(split(SEED_C3, ci as u64));
            let (mut truncated, mut untruncated, mut disagreements) = (0u64, 0u64, 0u64);
            for _ in 0..500 {
                let t = rng.random_range(1..=3 * (1u64 << k));
                let samples: Vec<Point> =
                    (0..t).map(|_| Point::random_uniform(n, &mut rng)).collect();
                let verdict = consistent_junta_check(&samples, &params);
                let oracle = oracle_consistent_exists(&samples, n, k, eps);
                if (verdict == Verdict::Truncated) != oracle {
                    disagreements += 1;
                }
                match verdict {
                    Verdict::Truncated => truncated += 1,
                    Verdict::Untruncated => untruncated += 1,
                }
            }
            (
                format!(
                    "n={n} k={k} eps={}: truncated={truncated} untruncated={untruncated} disagreements={disagreements}",
                    format_rational(&eps)
                ),
                truncated,
                untruncated,
                disagreements,
            )
        })
        .collect();
    OracleEquivalence {
        lines: per_config
            .iter()
            .map(|(l, ..)| l.as_str())
            .collect::<Vec<_>>()
            .join("\n"),
        disagreements: per_config.iter().map(|&(_, _, _, d)| d).sum(),
        truncated_seen: per_config.iter().map(|&(_, t, _, _)| t).sum(),
        untruncated_seen: per_config.iter().map(|&(_, _, u, _)| u).sum(),
    }
}

#[test]
fn criterion_3_consistent_check_matches_brute_force_oracle() {
    let eq = oracle_equivalence_report();
    report(
        "3",
        eq.disagreements == 0 && eq.truncated_seen > 0 && eq.untruncated_seen > 0,
        &format!(
            "22 configs x 500 sample sets: {} disagreements ({} truncated, {} untruncated verdicts)",
            eq.disagreements, eq.truncated_seen, eq.untruncated_seen
        ),
    );
}

// ------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_uniformity_tester_both_directions() {
    let uniform = run_experiment(&c4_cfg(SourceSpec::Uniform)).unwrap();
    let (fp_rate, alpha) = match uniform.summary {
        ExperimentSummary::Uniformity {
            truncated_rate,
            alpha,
            ..
        } => (truncated_rate, alpha),
        _ => unreachable!(),
    };
    let parity = run_experiment(&c4_cfg(SourceSpec::RandomParity)).unwrap();
    let detection_rate = match parity.summary {
        ExperimentSummary::Uniformity { truncated_rate, .. } => truncated_rate,
        _ => unreachable!(),
    };
    report(
        "4",
        fp_rate <= 0.05 && detection_rate >= 0.95,
        &format!(
            "n=10, k=2, calibrated alpha {alpha:.4}: uniform flagged {fp_rate}, parity flagged {detection_rate}"
        ),
    );
}

// ------------------------------------------------------------- criterion 5

fn collision_mean_report() -> (String, f64) {
    let trials = 10_000u64;
    let total: u64 = (0..trials)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(split(SEED_C5, j));
            let indices: Vec<u64> = (0..100).map(|_| rng.random_range(0..16u64)).collect();
            collision_count(&indices)
        })
        .sum();
    let mean = total as f64 / trials as f64;
    (
        format!("m=16 t=100 trials={trials} mean={mean:.6}"),
        mean,
    )
}

#[test]
fn criterion_5_collision_mean_under_uniform() {
    let (line, mean) = collision_mean_report();
    let expected = 309.375; // C(100,2) / 16
    let rel = (mean - expected).abs() / expected;
    report(
        "5",
        rel <= 0.02,
        &format!("{line}, expected {expected}, relative error {rel:.5}"),
    );
}

// ------------------------------------------------------------- criterion 6

fn fnv_fold(h: u64, value: u64) -> u64 {
    let mut h = h;
    for b in value.to_le_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn identity_report() -> (String, u64) {
    let mut configs = Vec::new();
    for n in 1..=10usize {
        for k in 1..=n.min(4) {
            for t in 1..=6u64 {
                configs.push((n, k, t));
            }
        }
    }
    let per_config: Vec<(u64, u64)> = configs
        .par_iter()
        .enumerate()
        .map(|(ci, &(n, k, t))| {
            let mut rng = ChaCha8Rng::seed_from_u64(split(SEED_C6, ci as u64));
            let mut mismatches = 0u64;
            let mut checksum = 0xcbf2_9ce4_8422_2325u64;
            for _ in 0..1000 {
                let samples: Vec<Point> =
                    (0..t).map(|_| Point::random_uniform(n, &mut rng)).collect();
                let via_parity =
                    parity_consistent_count(&MleInstance::new(samples.clone(), n, k));
                let via_dual = dual_weight_count(n, &samples, k);
                if via_parity != via_dual {
                    mismatches += 1;
                }
                checksum = fnv_fold(checksum, via_parity);
            }
            (mismatches, checksum)
        })
        .collect();
    let mismatches: u64 = per_config.iter().map(|&(m, _)| m).sum();
    let checksum = per_config
        .iter()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, &(_, c)| fnv_fold(h, c));
    (
        format!(
            "configs={} sets_per_config=1000 mismatches={mismatches} checksum={checksum:016x}",
            configs.len()
        ),
        mismatches,
    )
}

#[test]
fn criterion_6_parity_count_equals_dual_weight_count() {
    let (line, mismatches) = identity_report();
    report("6", mismatches == 0, &line);
}

// ------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_dual_count_moments_at_power_of_two_configs() {
    let mut ok = true;
    let mut details = Vec::new();
    for n in [8usize, 64] {
        let out = run_experiment(&c7_cfg(n)).unwrap();
        let (mean, second, tail, exact, t) = match out.summary {
            ExperimentSummary::LowerboundMoments {
                mean_w,
                second_moment_w,
                p_w_geq_1,
                exact_expectation,
                t,
                ..
            } => (mean_w, second_moment_w, p_w_geq_1, exact_expectation, t),
            _ => unreachable!(),
        };
        let here = exact == "1/1"
            && (0.97..=1.03).contains(&mean)
            && second <= 2.1
            && tail > 0.01;
        ok &= here;
        details.push(format!(
            "n={n} k=1 t={t}: E[w]={mean:.4}, E[w^2]={second:.4}, Pr[w>=1]={tail:.4}, exact={exact}"
        ));
    }
    report("7", ok, &details.join("; "));
}

// ------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_mle_failure_rate_and_identity_cross_check() {
    let out = run_experiment(&c8_cfg()).unwrap();
    let (rate, mismatches, t) = match out.summary {
        ExperimentSummary::LowerboundMle {
            truncated_rate,
            identity_mismatches,
            t,
            ..
        } => (truncated_rate, identity_mismatches, t),
        _ => unreachable!(),
    };
    report(
        "8",
        rate > 0.01 && mismatches == 0,
        &format!("n=8, k=1, t={t}, 100000 uniform trials: flagged rate {rate}, {mismatches} identity mismatches"),
    );
}

// ------------------------------------------------------------- criterion 9

fn run_to_file(base: &ExperimentConfig, threads: usize, path: std::path::PathBuf) -> Vec<u8> {
    let mut cfg = base.clone();
    cfg.threads = threads;
    cfg.out = Some(path.clone());
    run_experiment(&cfg).unwrap();
    std::fs::read(&path).unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn criterion_9_byte_identical_outputs_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut details = Vec::new();

    let mut c8_json = c8_cfg();
    c8_json.format = OutputFormat::Json;
    let file_configs: Vec<(&str, ExperimentConfig)> = vec![
        ("c1", c1_cfg()),
        ("c2", c2_cfg()),
        ("c4-uniform", c4_cfg(SourceSpec::Uniform)),
        ("c4-parity", c4_cfg(SourceSpec::RandomParity)),
        ("c7-n8", c7_cfg(8)),
        ("c7-n64", c7_cfg(64)),
        ("c8", c8_cfg()),
        ("c8-json", c8_json),
    ];
    for (label, cfg) in &file_configs {
        let a = run_to_file(cfg, 1, dir.path().join(format!("{label}.t1")));
        let b = run_to_file(cfg, 8, dir.path().join(format!("{label}.t8")));
        let same = a == b;
        ok &= same;
        details.push(format!("{label}={}", if same { "identical" } else { "DIFFERS" }));
    }

    let library_reports: Vec<(&str, fn() -> String)> = vec![
        ("c3", || oracle_equivalence_report().lines),
        ("c5", || collision_mean_report().0),
        ("c6", || identity_report().0),
    ];
    for (label, f) in library_reports {
        let a = in_pool(1, f);
        let b = in_pool(8, f);
        let same = a == b;
        ok &= same;
        details.push(format!("{label}={}", if same { "identical" } else { "DIFFERS" }));
    }

    report("9", ok, &details.join(", "));
}
