//! Monte Carlo engine and empirical risk metrics.
//!
//! Replica `i` always draws from stream `(seed, i)`, and results are collected
//! in replica order, so the sample vector is bit-identical for any worker
//! count.

use std::sync::OnceLock;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::copula::{CopulaError, CorrelationModel};
use crate::distributions::DistributionSpec;
use crate::markov::{MarkovError, StageChain};
use crate::rng::StreamFamily;
use crate::scenario::{
    select_distributions, AggregateFn, AggregatorRegistry, PipelineSpec, ScenarioError, ScenarioMode,
};

/// Environment variable capping the number of simulation workers.
pub const THREADS_ENV: &str = "RISK_THREADS";

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("empty sample set")]
    EmptySample,
    #[error("alpha {0} is outside (0, 1)")]
    Alpha(f64),
    #[error("empty tail for alpha {0}")]
    EmptyTail(f64),
    #[error("reports use different metric grids: {0}")]
    GridMismatch(String),
    #[error("comparison needs at least 2 reports, got {0}")]
    TooFewReports(usize),
    #[error("invalid worker count {0}")]
    Workers(usize),
    #[error("failed to start worker pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Copula(#[from] CopulaError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
}

type Result<T> = std::result::Result<T, RiskError>;

/// Draws of `X_total` for one (pipeline, mode, seed).
#[derive(Debug, Clone)]
pub struct SampleSet {
    values: Vec<f64>,
    seed: u64,
    mode: ScenarioMode,
    sorted: OnceLock<Vec<f64>>,
}

impl PartialEq for SampleSet {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.mode == other.mode
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl SampleSet {
    pub fn new(values: Vec<f64>, seed: u64, mode: ScenarioMode) -> Self {
        Self {
            values,
            seed,
            mode,
            sorted: OnceLock::new(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> &ScenarioMode {
        &self.mode
    }

    /// Ascending copy, computed on first use.
    pub fn sorted(&self) -> &[f64] {
        self.sorted.get_or_init(|| {
            let mut v = self.values.clone();
            v.sort_by(f64::total_cmp);
            v
        })
    }

    pub fn mean(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(RiskError::EmptySample);
        }
        Ok(self.values.iter().sum::<f64>() / self.len() as f64)
    }
}

/// One Monte Carlo draw generator for a resolved mode.
#[derive(Clone)]
pub enum Sampler {
    Copula {
        correlation: CorrelationModel,
        marginals: Vec<DistributionSpec>,
        aggregate: AggregateFn,
    },
    Markov {
        chain: StageChain,
        aggregate: AggregateFn,
    },
}

impl std::fmt::Debug for Sampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sampler::Copula { marginals, .. } => f.debug_struct("Copula").field("marginals", marginals).finish(),
            Sampler::Markov { chain, .. } => f.debug_struct("Markov").field("stages", &chain.stages()).finish(),
        }
    }
}

impl Sampler {
    pub fn new(pipeline: &PipelineSpec, mode: &ScenarioMode, registry: &AggregatorRegistry) -> Result<Self> {
        let selection = select_distributions(pipeline, mode)?;
        let aggregate = registry.resolve(pipeline.aggregator())?;
        Ok(match (pipeline.markov_stages(), selection.correlation) {
            (Some(stages), _) => Sampler::Markov {
                chain: StageChain::new(stages, &selection.ai_flags)?,
                aggregate,
            },
            (None, Some(correlation)) => {
                if correlation.dim() != selection.marginals.len() {
                    return Err(CopulaError::DimensionMismatch {
                        model: correlation.dim(),
                        got: selection.marginals.len(),
                    }
                    .into());
                }
                Sampler::Copula {
                    correlation,
                    marginals: selection.marginals,
                    aggregate,
                }
            }
            (None, None) => unreachable!("copula pipelines always select a correlation"),
        })
    }

    /// One aggregated outcome.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match self {
            Sampler::Copula {
                correlation,
                marginals,
                aggregate,
            } => {
                let xs = correlation.joint_sample(marginals, rng)?;
                Ok(aggregate(&xs))
            }
            Sampler::Markov { chain, aggregate } => Ok(aggregate(&chain.stage_costs(rng))),
        }
    }
}

/// Engine configuration.
#[derive(Debug, Clone, Default)]
pub struct EngineOptions {
    /// Worker threads; `None` reads `RISK_THREADS` or uses all cores.
    pub workers: Option<usize>,
    pub registry: AggregatorRegistry,
}

impl EngineOptions {
    pub fn with_workers(workers: usize) -> Self {
        Self {
            workers: Some(workers),
            ..Self::default()
        }
    }
}

/// Worker count from `RISK_THREADS`, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs `pipeline.n_samples()` replicas of `mode`.
pub fn run_monte_carlo(pipeline: &PipelineSpec, mode: &ScenarioMode) -> Result<SampleSet> {
    run_monte_carlo_with(pipeline, mode, &EngineOptions::default())
}

pub fn run_monte_carlo_with(
    pipeline: &PipelineSpec,
    mode: &ScenarioMode,
    options: &EngineOptions,
) -> Result<SampleSet> {
    let sampler = Sampler::new(pipeline, mode, &options.registry)?;
    let family = StreamFamily::new(pipeline.seed());
    let n = pipeline.n_samples();
    let workers = match options.workers.or_else(workers_from_env) {
        Some(0) => return Err(RiskError::Workers(0)),
        Some(w) => w,
        None => rayon::current_num_threads(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RiskError::ThreadPool(e.to_string()))?;
    let values = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = family.stream(i as u64);
                sampler.draw(&mut rng)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(SampleSet::new(values, pipeline.seed(), mode.clone()))
}

// ⌈x⌉ that treats values within rounding noise of an integer as that integer,
// so that e.g. (1 - 0.95) * 100 counts as 5 rather than 6.
fn ceil_count(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(RiskError::Alpha(alpha))
    }
}

/// Empirical VaR: the `⌈α n⌉`-th order statistic (1-indexed).
pub fn empirical_var(samples: &SampleSet, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let sorted = samples.sorted();
    if sorted.is_empty() {
        return Err(RiskError::EmptySample);
    }
    let k = ceil_count(alpha * sorted.len() as f64).clamp(1, sorted.len());
    Ok(sorted[k - 1])
}

/// Empirical ES: mean of the `⌈(1 - α) n⌉` largest values.
pub fn empirical_es(samples: &SampleSet, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let sorted = samples.sorted();
    if sorted.is_empty() {
        return Err(RiskError::EmptySample);
    }
    let m = ceil_count((1.0 - alpha) * sorted.len() as f64).min(sorted.len());
    if m == 0 {
        return Err(RiskError::EmptyTail(alpha));
    }
    let tail = &sorted[sorted.len() - m..];
    // Offsetting by the smallest tail value keeps a constant tail exact.
    let base = tail[0];
    Ok(base + tail.iter().map(|v| v - base).sum::<f64>() / m as f64)
}

/// Fraction of values strictly greater than `t`.
pub fn exceedance_prob(samples: &SampleSet, t: f64) -> Result<f64> {
    let sorted = samples.sorted();
    if sorted.is_empty() {
        return Err(RiskError::EmptySample);
    }
    let at_or_below = sorted.partition_point(|v| *v <= t);
    Ok((sorted.len() - at_or_below) as f64 / sorted.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub threshold: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaMetric {
    pub alpha: f64,
    pub value: f64,
}

/// Empirical risk metrics of one scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    #[serde(flatten)]
    pub mode: ScenarioMode,
    pub n: usize,
    pub seed: u64,
    pub mean: f64,
    pub std_error: f64,
    pub exceedance: Vec<Exceedance>,
    pub var: Vec<AlphaMetric>,
    pub es: Vec<AlphaMetric>,
}

impl RiskReport {
    pub fn thresholds(&self) -> Vec<f64> {
        self.exceedance.iter().map(|e| e.threshold).collect()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.var.iter().map(|v| v.alpha).collect()
    }
}

/// Assembles every metric of the grid plus the standard error of the mean.
pub fn summarize(samples: &SampleSet, thresholds: &[f64], alphas: &[f64]) -> Result<RiskReport> {
    let n = samples.len();
    let mean = samples.mean()?;
    let std_error = if n > 1 {
        let ss: f64 = samples.values().iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
    } else {
        0.0
    };
    let exceedance = thresholds
        .iter()
        .map(|&t| {
            Ok(Exceedance {
                threshold: t,
                probability: exceedance_prob(samples, t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut var = Vec::with_capacity(alphas.len());
    let mut es = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let v = empirical_var(samples, alpha)?;
        let e = empirical_es(samples, alpha)?;
        assert!(e >= v, "ES {e} < VaR {v} at alpha {alpha}");
        var.push(AlphaMetric { alpha, value: v });
        es.push(AlphaMetric { alpha, value: e });
    }
    Ok(RiskReport {
        mode: samples.mode().clone(),
        n,
        seed: samples.seed(),
        mean,
        std_error,
        exceedance,
        var,
        es,
    })
}

/// Differences of one row against the Non-AI row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDeltas {
    pub mean: f64,
    pub exceedance: Vec<f64>,
    pub var: Vec<f64>,
    pub es: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub report: RiskReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_vs_non_ai: Option<MetricDeltas>,
}

/// Reports aligned on a shared metric grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub thresholds: Vec<f64>,
    pub alphas: Vec<f64>,
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_scenarios(reports: &[RiskReport]) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(RiskError::TooFewReports(reports.len()));
    }
    let thresholds = reports[0].thresholds();
    let alphas = reports[0].alphas();
    for r in &reports[1..] {
        if r.thresholds() != thresholds {
            return Err(RiskError::GridMismatch(format!(
                "thresholds {:?} vs {:?}",
                thresholds,
                r.thresholds()
            )));
        }
        if r.alphas() != alphas || r.es.iter().map(|e| e.alpha).collect::<Vec<_>>() != alphas {
            return Err(RiskError::GridMismatch(format!("alphas {:?} vs {:?}", alphas, r.alphas())));
        }
    }
    let baseline = reports.iter().find(|r| r.mode == ScenarioMode::NonAi);
    let rows = reports
        .iter()
        .map(|r| ComparisonRow {
            report: r.clone(),
            delta_vs_non_ai: baseline.filter(|b| b.mode != r.mode).map(|b| MetricDeltas {
                mean: r.mean - b.mean,
                exceedance: r
                    .exceedance
                    .iter()
                    .zip(&b.exceedance)
                    .map(|(x, y)| x.probability - y.probability)
                    .collect(),
                var: r.var.iter().zip(&b.var).map(|(x, y)| x.value - y.value).collect(),
                es: r.es.iter().zip(&b.es).map(|(x, y)| x.value - y.value).collect(),
            }),
        })
        .collect();
    Ok(Comparison {
        thresholds,
        alphas,
        rows,
    })
}
