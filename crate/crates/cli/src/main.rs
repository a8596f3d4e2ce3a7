//! `scenario-risk` command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid arguments or inputs that fail to
//! load or validate, 2 for failures during computation.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use scenario_risk::calibration::{self, ingest_oracle_samples, ks_test, refit_update};
use scenario_risk::distributions::{fit_mle, DistributionSpec, FamilyKind};
use scenario_risk::report::{self, histogram, histogram_csv, Format};
use scenario_risk::risk::{compare_scenarios, run_monte_carlo_with, summarize, EngineOptions};
use scenario_risk::scenario::{load_scenario_with, LoadOptions, ModeKind, PipelineSpec, ScenarioMode};

#[derive(Debug, Parser)]
#[command(name = "scenario-risk", version, about = "Scenario-based Monte Carlo risk analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario mode and report its risk metrics.
    Run(RunArgs),
    /// Simulate several modes with a shared seed and tabulate them.
    Compare(CompareArgs),
    /// Fit a distribution family to a sample file by maximum likelihood.
    Fit(FitArgs),
    /// Kolmogorov–Smirnov test of a sample file against a distribution.
    Ks(KsArgs),
    /// Keep, refit, or tail-adjust a distribution against a sample file.
    Calibrate(CalibrateArgs),
    /// Re-render a saved JSON report or comparison.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Adds this value to the correlation diagonal before renormalizing.
    #[arg(long)]
    jitter: Option<f64>,
    /// AI events for partial-ai mode, comma separated; defaults to the config's set.
    #[arg(long, value_delimiter = ',')]
    ai_events: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, default_value = "json")]
    format: Format,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// non-ai, partial-ai or full-ai.
    #[arg(long, default_value = "non-ai")]
    mode: String,
    #[command(flatten)]
    output: OutputArgs,
    /// Number of equal-width histogram bins.
    #[arg(long, requires = "hist_out")]
    hist_bins: Option<usize>,
    /// Histogram CSV destination.
    #[arg(long, requires = "hist_bins")]
    hist_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Modes to compare, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "non-ai,partial-ai,full-ai")]
    modes: Vec<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// normal, gamma, lognormal, weibull, pareto, generalized_pareto or bernoulli.
    #[arg(long)]
    family: String,
    /// One value per line; `#` lines are comments.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct KsArgs {
    /// Distribution spec (JSON).
    #[arg(long)]
    dist: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = calibration::DEFAULT_SIGNIFICANCE)]
    sig: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Current distribution spec (JSON).
    #[arg(long)]
    current: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = calibration::DEFAULT_SIGNIFICANCE)]
    sig: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// JSON written by `run` or `compare`.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

enum Failure {
    Input(String),
    Runtime(String),
}

fn input(e: impl Display) -> Failure {
    Failure::Input(e.to_string())
}

fn runtime(e: impl Display) -> Failure {
    Failure::Runtime(e.to_string())
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Ks(a) => cmd_ks(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Report(a) => cmd_report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn emit(text: &str, out: Option<&Path>) -> CmdResult {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    emit(&text, out)
}

fn load_pipeline(args: &PipelineArgs) -> Result<PipelineSpec, Failure> {
    let pipeline = load_scenario_with(&args.config, LoadOptions { jitter: args.jitter }).map_err(input)?;
    Ok(pipeline.with_overrides(args.seed, args.samples))
}

fn resolve_mode(pipeline: &PipelineSpec, mode: &str, ai_events: &Option<Vec<String>>) -> Result<ScenarioMode, Failure> {
    let kind: ModeKind = mode.parse().map_err(input)?;
    let set = ai_events.as_ref().map(|v| v.iter().cloned().collect::<BTreeSet<_>>());
    pipeline.resolve_mode(kind, set).map_err(input)
}

fn cmd_run(a: RunArgs) -> CmdResult {
    let pipeline = load_pipeline(&a.pipeline)?;
    let mode = resolve_mode(&pipeline, &a.mode, &a.pipeline.ai_events)?;
    let samples = run_monte_carlo_with(&pipeline, &mode, &EngineOptions::default()).map_err(runtime)?;
    let rep = summarize(&samples, pipeline.thresholds(), pipeline.alphas()).map_err(runtime)?;
    if let (Some(bins), Some(path)) = (a.hist_bins, a.hist_out.as_deref()) {
        if bins == 0 {
            return Err(input("--hist-bins must be positive"));
        }
        emit(&histogram_csv(&histogram(samples.values(), bins)), Some(path))?;
    }
    emit(&report::render_report(&rep, a.output.format), a.output.out.as_deref())
}

fn cmd_compare(a: CompareArgs) -> CmdResult {
    if a.modes.len() < 2 {
        return Err(input(format!("compare needs at least 2 modes, got {}", a.modes.len())));
    }
    let pipeline = load_pipeline(&a.pipeline)?;
    let modes = a
        .modes
        .iter()
        .map(|m| resolve_mode(&pipeline, m, &a.pipeline.ai_events))
        .collect::<Result<Vec<_>, _>>()?;
    let reports = modes
        .iter()
        .map(|mode| {
            let samples = run_monte_carlo_with(&pipeline, mode, &EngineOptions::default()).map_err(runtime)?;
            summarize(&samples, pipeline.thresholds(), pipeline.alphas()).map_err(runtime)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cmp = compare_scenarios(&reports).map_err(runtime)?;
    emit(&report::render_comparison(&cmp, a.output.format), a.output.out.as_deref())
}

fn read_spec(path: &Path) -> Result<DistributionSpec, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn cmd_fit(a: FitArgs) -> CmdResult {
    let family: FamilyKind = a.family.parse().map_err(input)?;
    let data = ingest_oracle_samples(&a.data).map_err(input)?;
    let fitted = fit_mle(family, &data).map_err(runtime)?;
    emit_json(&fitted, a.out.as_deref())
}

fn cmd_ks(a: KsArgs) -> CmdResult {
    let dist = read_spec(&a.dist)?;
    let data = ingest_oracle_samples(&a.data).map_err(input)?;
    calibration::ks_critical_constant(a.sig).map_err(input)?;
    let outcome = ks_test(&data, &dist, a.sig).map_err(runtime)?;
    emit_json(&outcome, a.out.as_deref())
}

fn cmd_calibrate(a: CalibrateArgs) -> CmdResult {
    let current = read_spec(&a.current)?;
    let data = ingest_oracle_samples(&a.data).map_err(input)?;
    calibration::ks_critical_constant(a.sig).map_err(input)?;
    let result = refit_update(&current, &data, a.sig).map_err(runtime)?;
    emit_json(&result, a.out.as_deref())
}

fn cmd_report(a: ReportArgs) -> CmdResult {
    let text = std::fs::read_to_string(&a.input)
        .map_err(|e| input(format!("cannot read {}: {e}", a.input.display())))?;
    let saved = report::parse_saved(&text).map_err(|e| input(format!("{}: {e}", a.input.display())))?;
    emit(&saved.render(a.output.format), a.output.out.as_deref())
}
