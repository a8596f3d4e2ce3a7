//! Lookalike calibration: sample ingestion, Kolmogorov–Smirnov testing, MLE
//! refits and escalation to tail-adjusted mixtures.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{
    fit_gpd_exceedances, fit_mle, make_tail_adjusted, DistributionError, DistributionSpec, Family,
    FamilyKind,
};

/// Minimum rows accepted from a sample file.
pub const MIN_INGEST_ROWS: usize = 10;
/// Minimum sample size for the asymptotic KS test.
pub const MIN_KS_SAMPLES: usize = 30;
/// Minimum exceedances needed to fit an escalation tail.
pub const MIN_TAIL_EXCEEDANCES: usize = 10;
/// Quantile of the refitted body used as the tail splice point.
pub const SPLICE_QUANTILE: f64 = 0.95;
pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;

/// Asymptotic Kolmogorov critical constants `c(sig)`; critical value is `c / sqrt(n)`.
pub const KS_CRITICAL: [(f64, f64); 2] = [(0.05, 1.358), (0.01, 1.628)];

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: cannot parse `{text}` as a finite real")]
    Parse { row: usize, text: String },
    #[error("need at least {needed} samples, got {got}")]
    SampleSize { needed: usize, got: usize },
    #[error(
        "KS test needs n >= {MIN_KS_SAMPLES}, got {0}; interpret the statistic directly for small samples"
    )]
    SmallSample(usize),
    #[error("unsupported significance {0}; supported levels are 0.05 and 0.01")]
    Significance(f64),
    #[error("empty sample")]
    Empty,
    #[error("only {got} samples exceed the splice point {threshold}; need at least {MIN_TAIL_EXCEEDANCES}")]
    InsufficientTail { threshold: f64, got: usize },
    #[error("tail-adjusted mixture does not improve the fit (KS {after} vs {before})")]
    NoImprovement { before: f64, after: f64 },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

type Result<T> = std::result::Result<T, CalibrationError>;

/// Reads one finite real per line. Blank lines and lines starting with `#`
/// are skipped; `row` in errors is the 1-based line number.
pub fn ingest_oracle_samples(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CalibrationError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_samples(&text)
}

pub fn parse_samples(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => {
                return Err(CalibrationError::Parse {
                    row: i + 1,
                    text: t.to_string(),
                })
            }
        }
    }
    if out.len() < MIN_INGEST_ROWS {
        return Err(CalibrationError::SampleSize {
            needed: MIN_INGEST_ROWS,
            got: out.len(),
        });
    }
    Ok(out)
}

/// Exact two-sided KS distance between the empirical cdf and `dist`.
pub fn ks_statistic(samples: &[f64], dist: &DistributionSpec) -> Result<f64> {
    ks_statistic_with(samples, |x| dist.cdf(x))
}

/// KS distance against an arbitrary cdf.
pub fn ks_statistic_with<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(CalibrationError::Empty);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        let upper = ((i + 1) as f64 / n - f).abs();
        let lower = (i as f64 / n - f).abs();
        d.max(upper).max(lower)
    });
    Ok(d)
}

/// `c(sig)` for a supported significance level.
pub fn ks_critical_constant(significance: f64) -> Result<f64> {
    KS_CRITICAL
        .iter()
        .find(|(s, _)| (s - significance).abs() < 1e-12)
        .map(|&(_, c)| c)
        .ok_or(CalibrationError::Significance(significance))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsOutcome {
    pub reject: bool,
    pub d: f64,
    pub critical: f64,
    pub n: usize,
    pub significance: f64,
}

/// Rejection decision for a statistic `d` on `n` samples.
pub fn ks_decision(d: f64, n: usize, significance: f64) -> Result<KsOutcome> {
    let c = ks_critical_constant(significance)?;
    if n < MIN_KS_SAMPLES {
        return Err(CalibrationError::SmallSample(n));
    }
    let critical = c / (n as f64).sqrt();
    Ok(KsOutcome {
        reject: d > critical,
        d,
        critical,
        n,
        significance,
    })
}

pub fn ks_test(samples: &[f64], dist: &DistributionSpec, significance: f64) -> Result<KsOutcome> {
    ks_critical_constant(significance)?;
    if samples.len() < MIN_KS_SAMPLES {
        return Err(CalibrationError::SmallSample(samples.len()));
    }
    ks_decision(ks_statistic(samples, dist)?, samples.len(), significance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Keep,
    Refit,
    EscalateToMixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub prior: DistributionSpec,
    pub updated: DistributionSpec,
    pub ks_before: f64,
    pub ks_after: f64,
    pub decision: Decision,
    pub sample_count: usize,
    pub significance: f64,
    pub critical: f64,
}

/// Non-mixture component that `refit_update` refits: `current` itself, or the
/// largest-weight component of a mixture.
pub fn body_of(current: &DistributionSpec) -> &DistributionSpec {
    match current.family() {
        Family::Mixture {
            weights,
            components,
        } => {
            let mut best = 0;
            for (i, w) in weights.iter().enumerate() {
                if *w > weights[best] {
                    best = i;
                }
            }
            &components[best]
        }
        _ => current,
    }
}

/// Keep, refit, or escalate `current` against `samples`.
///
/// Escalation splices a generalized Pareto tail at the 0.95 quantile `q` of
/// the full-sample refit: `epsilon` is the fraction of samples above `q`, the
/// tail is fitted to those exceedances with location `q`, and the body is
/// refitted on the samples at or below `q`.
pub fn refit_update(
    current: &DistributionSpec,
    samples: &[f64],
    significance: f64,
) -> Result<CalibrationResult> {
    let before = ks_test(samples, current, significance)?;
    let result = |updated: DistributionSpec, ks_after: f64, decision| CalibrationResult {
        prior: current.clone(),
        updated,
        ks_before: before.d,
        ks_after,
        decision,
        sample_count: samples.len(),
        significance,
        critical: before.critical,
    };
    if !before.reject {
        return Ok(result(current.clone(), before.d, Decision::Keep));
    }

    let body = body_of(current);
    let family = body.kind();
    let refit = with_unit_of(fit_mle(family, samples)?, current);
    let after = ks_test(samples, &refit, significance)?;
    if !after.reject {
        return Ok(result(refit, after.d, Decision::Refit));
    }

    let q = refit.quantile(SPLICE_QUANTILE)?;
    let (below, above): (Vec<f64>, Vec<f64>) = samples.iter().partition(|&&x| x <= q);
    if above.len() < MIN_TAIL_EXCEEDANCES {
        return Err(CalibrationError::InsufficientTail {
            threshold: q,
            got: above.len(),
        });
    }
    let epsilon = above.len() as f64 / samples.len() as f64;
    let tail = fit_gpd_exceedances(&above, q)?;
    let body_refit = fit_mle(family, &below)?;
    let mixture = with_unit_of(make_tail_adjusted(&body_refit, epsilon, &tail)?, current);
    let ks_mix = ks_statistic(samples, &mixture)?;
    if ks_mix > before.d {
        return Err(CalibrationError::NoImprovement {
            before: before.d,
            after: ks_mix,
        });
    }
    Ok(result(mixture, ks_mix, Decision::EscalateToMixture))
}

fn with_unit_of(spec: DistributionSpec, like: &DistributionSpec) -> DistributionSpec {
    match like.unit() {
        Some(u) => spec.with_unit(u),
        None => spec,
    }
}

/// Family of the body that would be refitted.
pub fn body_family(current: &DistributionSpec) -> FamilyKind {
    body_of(current).kind()
}
