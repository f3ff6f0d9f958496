//! `trunctest`: seeded Monte Carlo experiments for junta-truncation testing.
//!
//! Subcommands map one-to-one onto harness modes. Exit code 0 means the
//! experiment ran; exit code 2 means the configuration was refused (bad
//! flags, invalid instance, or a sample budget over the cap).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trunctest_core::harness::{
    render, render_summary, run_experiment, AlphaChoice, ExperimentConfig, Mode, OutputFormat,
    SourceSpec, DEFAULT_CALIBRATION_TRIALS, DEFAULT_SAMPLE_CAP,
};
use trunctest_core::rational::parse_rational;
use trunctest_core::testers::Amplify;
use trunctest_core::JuntaSpec;

const SAMPLE_CAP_ENV: &str = "TRUNCTEST_SAMPLE_CAP";

#[derive(Parser)]
#[command(
    name = "trunctest",
    version,
    about = "Testers and experiments for junta truncation of the uniform distribution on {0,1}^n"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Consistent-hypothesis tester: flags "truncated" iff some k-junta of
    /// volume at most 1-eps accepts every sample
    Consistent(RunArgs),
    /// Subset-wise collision uniformity tester
    Uniformity(RunArgs),
    /// Parity-truncation distinguisher experiments
    #[command(subcommand)]
    Lowerbound(LowerboundCommand),
    /// Calibrate the collision threshold constant against the uniform null
    Calibrate(RunArgs),
}

#[derive(Subcommand)]
enum LowerboundCommand {
    /// Moments of the dual weight-k count over random subspace draws
    Moments(RunArgs),
    /// Failure rate of the maximum-likelihood distinguisher on uniform samples
    Mle(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Ambient dimension
    #[arg(long)]
    n: usize,
    /// Junta arity
    #[arg(long)]
    k: usize,
    /// Distance parameter as a rational, e.g. 1/2
    #[arg(long, default_value = "1/2")]
    eps: String,
    /// Number of independent trials
    #[arg(long, default_value_t = 100)]
    trials: u64,
    /// Master seed; trial i is seeded by split(seed, i)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// uniform | junta:<file> | parity:<i,j,...> | random-junta | random-parity
    #[arg(long, default_value = "uniform")]
    source: String,
    /// Output path for the per-trial table; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long, default_value = "csv")]
    format: String,
    /// Leading constant of the uniformity sample budget
    #[arg(long, default_value_t = 4.0)]
    c2: f64,
    /// Collision threshold constant: a number, or "calibrated"
    #[arg(long, default_value = "2")]
    alpha: String,
    /// none | median
    #[arg(long, default_value = "none")]
    amplify: String,
    /// Worker threads; 0 uses all cores (output is identical either way)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Simulation count for threshold calibration
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_TRIALS)]
    calibration_trials: u64,
    /// Record per-trial wall-clock times (breaks byte-identical reruns)
    #[arg(long)]
    timings: bool,
}

fn parse_source(raw: &str) -> Result<SourceSpec, String> {
    if raw == "uniform" {
        return Ok(SourceSpec::Uniform);
    }
    if raw == "random-junta" {
        return Ok(SourceSpec::RandomJunta);
    }
    if raw == "random-parity" {
        return Ok(SourceSpec::RandomParity);
    }
    if let Some(path) = raw.strip_prefix("junta:") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read junta file {path:?}: {e}"))?;
        let line = text
            .lines()
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| format!("junta file {path:?} is empty"))?;
        let spec: JuntaSpec = line.parse().map_err(|e| format!("{e}"))?;
        return Ok(SourceSpec::Junta(spec));
    }
    if let Some(list) = raw.strip_prefix("parity:") {
        let coords = list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| format!("bad parity coordinate {t:?}: {e}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(SourceSpec::Parity(coords));
    }
    Err(format!(
        "unknown source {raw:?}; expected uniform, junta:<file>, parity:<i,j,...>, random-junta, or random-parity"
    ))
}

fn build_config(mode: Mode, args: &RunArgs) -> Result<ExperimentConfig, String> {
    let eps = parse_rational(&args.eps)?;
    let mut cfg = ExperimentConfig::new(mode, args.n, args.k, eps);
    cfg.trials = args.trials;
    cfg.master_seed = args.seed;
    cfg.c2 = args.c2;
    cfg.alpha = if args.alpha == "calibrated" {
        AlphaChoice::Calibrated
    } else {
        AlphaChoice::Fixed(
            args.alpha
                .parse::<f64>()
                .map_err(|e| format!("bad alpha {:?}: {e}", args.alpha))?,
        )
    };
    cfg.amplify = match args.amplify.as_str() {
        "none" => Amplify::None,
        "median" => Amplify::Median,
        other => return Err(format!("unknown amplify mode {other:?}; expected none or median")),
    };
    cfg.source = parse_source(&args.source)?;
    cfg.out = args.out.clone();
    cfg.format = match args.format.as_str() {
        "csv" => OutputFormat::Csv,
        "json" => OutputFormat::Json,
        other => return Err(format!("unknown format {other:?}; expected csv or json")),
    };
    cfg.threads = args.threads;
    cfg.calibration_trials = args.calibration_trials;
    cfg.timings = args.timings;
    cfg.sample_cap = match std::env::var(SAMPLE_CAP_ENV) {
        Ok(v) => v
            .parse::<u64>()
            .map_err(|e| format!("bad {SAMPLE_CAP_ENV} value {v:?}: {e}"))?,
        Err(std::env::VarError::NotPresent) => DEFAULT_SAMPLE_CAP,
        Err(e) => return Err(format!("cannot read {SAMPLE_CAP_ENV}: {e}")),
    };
    Ok(cfg)
}

fn run(mode: Mode, args: &RunArgs) -> ExitCode {
    let cfg = match build_config(mode, args) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("trunctest: config refused: {msg}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&cfg) {
        Ok(output) => {
            let summary = render_summary(&output.summary);
            if cfg.out.is_some() {
                println!("{summary}");
            } else {
                match cfg.format {
                    OutputFormat::Csv => {
                        print!("{}", render(&cfg, &output));
                        eprintln!("{summary}");
                    }
                    OutputFormat::Json => print!("{}", render(&cfg, &output)),
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("trunctest: {e}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Consistent(args) => run(Mode::Consistent, args),
        Command::Uniformity(args) => run(Mode::Uniformity, args),
        Command::Lowerbound(LowerboundCommand::Moments(args)) => {
            run(Mode::LowerboundMoments, args)
        }
        Command::Lowerbound(LowerboundCommand::Mle(args)) => run(Mode::LowerboundMle, args),
        Command::Calibrate(args) => run(Mode::Calibrate, args),
    }
}
