//! Parametric distributions: sampling, CDF, quantile, analytic moments,
//! maximum-likelihood fitting and tail-adjusted mixtures.
//!
//! A [`DistributionSpec`] can only be obtained through validation (either a
//! constructor or deserialization), so every operation on it may assume the
//! parameters are inside their domain.
//!
//! Gamma is parameterized by `(shape, scale)` throughout; Pareto carries an
//! explicit `minimum` and the generalized Pareto an explicit `location`
//! (the threshold where the tail starts).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution as _, Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{self, gamma_p, invert_cdf, ln_gamma, norm_cdf, norm_pdf, norm_quantile};

/// Mixture weights must sum to one within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Minimum number of samples accepted by [`fit_mle`].
pub const MIN_FIT_SAMPLES: usize = 10;
/// Relative parameter tolerance of the iterative MLE solvers.
pub const FIT_REL_TOL: f64 = 1e-8;
/// Iteration cap of the iterative MLE solvers.
pub const FIT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("{family}: parameter `{name}` = {value} is invalid ({reason})")]
    Parameter {
        family: &'static str,
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("mixture weights must sum to 1 within {WEIGHT_SUM_TOL:e}, got {0}")]
    WeightSum(f64),
    #[error("invalid mixture: {0}")]
    Mixture(String),
    #[error("probability {0} is outside (0, 1)")]
    ProbabilityDomain(f64),
    #[error("sample {value} at index {index} is outside the support of {family}")]
    Support {
        family: &'static str,
        index: usize,
        value: f64,
    },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("degenerate sample for {family}: {reason}")]
    Degenerate {
        family: &'static str,
        reason: &'static str,
    },
    #[error("{family} fit did not converge after {iterations} iterations (last iterate {last:?})")]
    NoConvergence {
        family: &'static str,
        iterations: usize,
        last: Vec<f64>,
    },
    #[error("maximum likelihood fitting is not available for {0}")]
    UnsupportedFit(&'static str),
    #[error("unknown distribution family `{0}`")]
    UnknownFamily(String),
}

type Result<T> = std::result::Result<T, DistributionError>;

fn one() -> f64 {
    1.0
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

/// Family tag plus parameters. Serialized with an internal `"family"` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Normal {
        mean: f64,
        stddev: f64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    Weibull {
        shape: f64,
        scale: f64,
    },
    Pareto {
        shape: f64,
        minimum: f64,
    },
    #[serde(alias = "gpd")]
    GeneralizedPareto {
        shape: f64,
        scale: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        location: f64,
    },
    /// Takes `value` with probability `p`, else 0. `value` defaults to 1.
    Bernoulli {
        p: f64,
        #[serde(default = "one")]
        value: f64,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<DistributionSpec>,
    },
}

/// Family identifier without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Normal,
    Gamma,
    Lognormal,
    Weibull,
    Pareto,
    GeneralizedPareto,
    Bernoulli,
    Mixture,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Normal => "normal",
            FamilyKind::Gamma => "gamma",
            FamilyKind::Lognormal => "lognormal",
            FamilyKind::Weibull => "weibull",
            FamilyKind::Pareto => "pareto",
            FamilyKind::GeneralizedPareto => "generalized_pareto",
            FamilyKind::Bernoulli => "bernoulli",
            FamilyKind::Mixture => "mixture",
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = DistributionError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "normal" => FamilyKind::Normal,
            "gamma" => FamilyKind::Gamma,
            "lognormal" => FamilyKind::Lognormal,
            "weibull" => FamilyKind::Weibull,
            "pareto" => FamilyKind::Pareto,
            "generalized_pareto" | "gpd" => FamilyKind::GeneralizedPareto,
            "bernoulli" => FamilyKind::Bernoulli,
            "mixture" => FamilyKind::Mixture,
            _ => return Err(DistributionError::UnknownFamily(s.to_string())),
        })
    }
}

impl Family {
    pub fn kind(&self) -> FamilyKind {
        match self {
            Family::Normal { .. } => FamilyKind::Normal,
            Family::Gamma { .. } => FamilyKind::Gamma,
            Family::Lognormal { .. } => FamilyKind::Lognormal,
            Family::Weibull { .. } => FamilyKind::Weibull,
            Family::Pareto { .. } => FamilyKind::Pareto,
            Family::GeneralizedPareto { .. } => FamilyKind::GeneralizedPareto,
            Family::Bernoulli { .. } => FamilyKind::Bernoulli,
            Family::Mixture { .. } => FamilyKind::Mixture,
        }
    }
}

/// Analytic mean and variance. Undefined moments are `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

/// A validated distribution with an optional unit label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct DistributionSpec {
    family: Family,
    unit: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    #[serde(flatten)]
    family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unit: Option<String>,
}

impl TryFrom<RawSpec> for DistributionSpec {
    type Error = DistributionError;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let mut spec = DistributionSpec::new(raw.family)?;
        spec.unit = raw.unit;
        Ok(spec)
    }
}

impl From<DistributionSpec> for RawSpec {
    fn from(spec: DistributionSpec) -> Self {
        RawSpec {
            family: spec.family,
            unit: spec.unit,
        }
    }
}

fn positive(family: &'static str, name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(DistributionError::Parameter {
            family,
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

fn finite(family: &'static str, name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(DistributionError::Parameter {
            family,
            name,
            value,
            reason: "must be finite",
        })
    }
}

fn validate_family(family: &Family) -> Result<()> {
    match *family {
        Family::Normal { mean, stddev } => {
            finite("normal", "mean", mean)?;
            positive("normal", "stddev", stddev)
        }
        Family::Gamma { shape, scale } => {
            positive("gamma", "shape", shape)?;
            positive("gamma", "scale", scale)
        }
        Family::Lognormal { mu, sigma } => {
            finite("lognormal", "mu", mu)?;
            positive("lognormal", "sigma", sigma)
        }
        Family::Weibull { shape, scale } => {
            positive("weibull", "shape", shape)?;
            positive("weibull", "scale", scale)
        }
        Family::Pareto { shape, minimum } => {
            positive("pareto", "shape", shape)?;
            positive("pareto", "minimum", minimum)
        }
        Family::GeneralizedPareto {
            shape,
            scale,
            location,
        } => {
            finite("generalized_pareto", "shape", shape)?;
            positive("generalized_pareto", "scale", scale)?;
            if location.is_finite() && location >= 0.0 {
                Ok(())
            } else {
                Err(DistributionError::Parameter {
                    family: "generalized_pareto",
                    name: "location",
                    value: location,
                    reason: "must be finite and >= 0",
                })
            }
        }
        Family::Bernoulli { p, value } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(DistributionError::Parameter {
                    family: "bernoulli",
                    name: "p",
                    value: p,
                    reason: "must lie in [0, 1]",
                });
            }
            positive("bernoulli", "value", value)
        }
        Family::Mixture {
            ref weights,
            ref components,
        } => {
            if weights.is_empty() || weights.len() != components.len() {
                return Err(DistributionError::Mixture(format!(
                    "{} weights for {} components",
                    weights.len(),
                    components.len()
                )));
            }
            if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
                return Err(DistributionError::Parameter {
                    family: "mixture",
                    name: "weights",
                    value: *w,
                    reason: "must be finite and >= 0",
                });
            }
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(DistributionError::WeightSum(total));
            }
            if components.iter().any(|c| c.kind() == FamilyKind::Mixture) {
                return Err(DistributionError::Mixture(
                    "mixture components may not themselves be mixtures".into(),
                ));
            }
            Ok(())
        }
    }
}

impl DistributionSpec {
    /// Validates `family` and wraps it.
    pub fn new(family: Family) -> Result<Self> {
        validate_family(&family)?;
        Ok(Self { family, unit: None })
    }

    pub fn normal(mean: f64, stddev: f64) -> Result<Self> {
        Self::new(Family::Normal { mean, stddev })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        Self::new(Family::Gamma { shape, scale })
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Lognormal { mu, sigma })
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        Self::new(Family::Weibull { shape, scale })
    }

    pub fn pareto(shape: f64, minimum: f64) -> Result<Self> {
        Self::new(Family::Pareto { shape, minimum })
    }

    pub fn generalized_pareto(shape: f64, scale: f64, location: f64) -> Result<Self> {
        Self::new(Family::GeneralizedPareto {
            shape,
            scale,
            location,
        })
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::new(Family::Bernoulli { p, value: 1.0 })
    }

    /// Bernoulli taking `value` on success: a point mass at `value` when `p = 1`.
    pub fn scaled_bernoulli(p: f64, value: f64) -> Result<Self> {
        Self::new(Family::Bernoulli { p, value })
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<DistributionSpec>) -> Result<Self> {
        Self::new(Family::Mixture {
            weights,
            components,
        })
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = Some(unit.into());
        self
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn kind(&self) -> FamilyKind {
        self.family.kind()
    }

    pub fn unit(&self) -> Option<&str> {
        self.unit.as_deref()
    }

    /// Whether the CDF is continuous (no atoms).
    pub fn is_continuous(&self) -> bool {
        match &self.family {
            Family::Bernoulli { .. } => false,
            Family::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .all(|(w, c)| *w == 0.0 || c.is_continuous()),
            _ => true,
        }
    }

    /// Draws one value.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            Family::Normal { mean, stddev } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + stddev * z
            }
            Family::Gamma { shape, scale } => {
                // parameters validated on construction
                rand_distr::Gamma::new(shape, scale)
                    .expect("validated gamma parameters")
                    .sample(rng)
            }
            Family::Lognormal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                (mu + sigma * z).exp()
            }
            Family::Weibull { .. } | Family::Pareto { .. } | Family::GeneralizedPareto { .. } => {
                let u: f64 = Open01.sample(rng);
                self.quantile_unchecked(u)
            }
            Family::Bernoulli { p, value } => {
                if rng.random::<f64>() < p {
                    value
                } else {
                    0.0
                }
            }
            Family::Mixture {
                ref weights,
                ref components,
            } => {
                let idx = pick_component(weights, rng.random::<f64>());
                components[idx].sample(rng)
            }
        }
    }

    /// Cumulative distribution function `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match self.family {
            Family::Normal { mean, stddev } => norm_cdf((x - mean) / stddev),
            Family::Gamma { shape, scale } => gamma_p(shape, x / scale),
            Family::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    norm_cdf((x.ln() - mu) / sigma)
                }
            }
            Family::Weibull { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-(x / scale).powf(shape)).exp_m1()
                }
            }
            Family::Pareto { shape, minimum } => {
                if x <= minimum {
                    0.0
                } else {
                    -(shape * (minimum / x).ln()).exp_m1()
                }
            }
            Family::GeneralizedPareto {
                shape,
                scale,
                location,
            } => {
                if x <= location {
                    return 0.0;
                }
                let z = (x - location) / scale;
                if shape == 0.0 {
                    -(-z).exp_m1()
                } else {
                    let t = shape * z;
                    if t <= -1.0 {
                        1.0
                    } else {
                        -((-1.0 / shape) * t.ln_1p()).exp_m1()
                    }
                }
            }
            Family::Bernoulli { p, value } => {
                if x < 0.0 {
                    0.0
                } else if x < value {
                    1.0 - p
                } else {
                    1.0
                }
            }
            Family::Mixture {
                ref weights,
                ref components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.cdf(x))
                .sum(),
        }
    }

    /// Density of the absolutely continuous part (atoms contribute 0).
    pub fn density(&self, x: f64) -> f64 {
        match self.family {
            Family::Normal { mean, stddev } => norm_pdf((x - mean) / stddev) / stddev,
            Family::Gamma { shape, scale } => {
                if x < 0.0 || (x == 0.0 && shape > 1.0) {
                    0.0
                } else if x == 0.0 {
                    if shape == 1.0 {
                        1.0 / scale
                    } else {
                        f64::INFINITY
                    }
                } else {
                    let y = x / scale;
                    ((shape - 1.0) * y.ln() - y - ln_gamma(shape)).exp() / scale
                }
            }
            Family::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    norm_pdf((x.ln() - mu) / sigma) / (x * sigma)
                }
            }
            Family::Weibull { shape, scale } => {
                if x < 0.0 {
                    0.0
                } else {
                    let y = x / scale;
                    shape / scale * y.powf(shape - 1.0) * (-y.powf(shape)).exp()
                }
            }
            Family::Pareto { shape, minimum } => {
                if x < minimum {
                    0.0
                } else {
                    shape * minimum.powf(shape) / x.powf(shape + 1.0)
                }
            }
            Family::GeneralizedPareto {
                shape,
                scale,
                location,
            } => {
                if x < location {
                    return 0.0;
                }
                let z = (x - location) / scale;
                if shape == 0.0 {
                    (-z).exp() / scale
                } else {
                    let t = 1.0 + shape * z;
                    if t <= 0.0 {
                        0.0
                    } else {
                        t.powf(-1.0 / shape - 1.0) / scale
                    }
                }
            }
            Family::Bernoulli { .. } => 0.0,
            Family::Mixture {
                ref weights,
                ref components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.density(x))
                .sum(),
        }
    }

    /// Quantile function `inf { x : F(x) >= u }` for `u` in (0, 1).
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(DistributionError::ProbabilityDomain(u));
        }
        Ok(self.quantile_unchecked(u))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        match self.family {
            Family::Normal { mean, stddev } => mean + stddev * norm_quantile(u),
            Family::Gamma { shape, scale } => gamma_quantile(shape, scale, u, self),
            Family::Lognormal { mu, sigma } => (mu + sigma * norm_quantile(u)).exp(),
            Family::Weibull { shape, scale } => scale * (-(-u).ln_1p()).powf(1.0 / shape),
            Family::Pareto { shape, minimum } => minimum * (-(-u).ln_1p() / shape).exp(),
            Family::GeneralizedPareto {
                shape,
                scale,
                location,
            } => {
                let log_tail = (-u).ln_1p();
                if shape == 0.0 {
                    location - scale * log_tail
                } else {
                    location + scale * (-shape * log_tail).exp_m1() / shape
                }
            }
            Family::Bernoulli { p, value } => {
                if u <= 1.0 - p {
                    0.0
                } else {
                    value
                }
            }
            Family::Mixture { ref components, .. } => {
                let (lo, hi) = components
                    .iter()
                    .map(|c| c.quantile_unchecked(u))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
                        (lo.min(q), hi.max(q))
                    });
                if self.cdf(lo) >= u {
                    return lo;
                }
                invert_cdf(u, |x| self.cdf(x), |x| self.density(x), lo, hi, 0.5 * (lo + hi))
            }
        }
    }

    /// Analytic mean and variance.
    pub fn moments(&self) -> Moments {
        match self.family {
            Family::Normal { mean, stddev } => Moments {
                mean,
                variance: stddev * stddev,
            },
            Family::Gamma { shape, scale } => Moments {
                mean: shape * scale,
                variance: shape * scale * scale,
            },
            Family::Lognormal { mu, sigma } => {
                let s2 = sigma * sigma;
                Moments {
                    mean: (mu + 0.5 * s2).exp(),
                    variance: s2.exp_m1() * (2.0 * mu + s2).exp(),
                }
            }
            Family::Weibull { shape, scale } => {
                let g1 = special::gamma(1.0 + 1.0 / shape);
                let g2 = special::gamma(1.0 + 2.0 / shape);
                Moments {
                    mean: scale * g1,
                    variance: scale * scale * (g2 - g1 * g1),
                }
            }
            Family::Pareto { shape, minimum } => Moments {
                mean: if shape > 1.0 {
                    shape * minimum / (shape - 1.0)
                } else {
                    f64::INFINITY
                },
                variance: if shape > 2.0 {
                    minimum * minimum * shape / ((shape - 1.0).powi(2) * (shape - 2.0))
                } else {
                    f64::INFINITY
                },
            },
            Family::GeneralizedPareto {
                shape,
                scale,
                location,
            } => Moments {
                mean: if shape < 1.0 {
                    location + scale / (1.0 - shape)
                } else {
                    f64::INFINITY
                },
                variance: if shape < 0.5 {
                    scale * scale / ((1.0 - shape).powi(2) * (1.0 - 2.0 * shape))
                } else {
                    f64::INFINITY
                },
            },
            Family::Bernoulli { p, value } => Moments {
                mean: p * value,
                variance: p * (1.0 - p) * value * value,
            },
            Family::Mixture {
                ref weights,
                ref components,
            } => {
                let parts: Vec<(f64, Moments)> = weights
                    .iter()
                    .zip(components)
                    .filter(|(w, _)| **w > 0.0)
                    .map(|(w, c)| (*w, c.moments()))
                    .collect();
                let mean: f64 = parts.iter().map(|(w, m)| w * m.mean).sum();
                let variance = if !mean.is_finite() || parts.iter().any(|(_, m)| !m.variance.is_finite()) {
                    f64::INFINITY
                } else {
                    // law of total variance
                    let second: f64 = parts
                        .iter()
                        .map(|(w, m)| w * (m.variance + m.mean * m.mean))
                        .sum();
                    (second - mean * mean).max(0.0)
                };
                Moments {
                    mean: if mean.is_nan() { f64::INFINITY } else { mean },
                    variance,
                }
            }
        }
    }

    /// Whether `x` lies in the (closed) support.
    pub fn in_support(&self, x: f64) -> bool {
        if !x.is_finite() {
            return false;
        }
        match self.family {
            Family::Normal { .. } => true,
            Family::Gamma { .. } | Family::Weibull { .. } => x >= 0.0,
            Family::Lognormal { .. } => x > 0.0,
            Family::Pareto { minimum, .. } => x >= minimum,
            Family::GeneralizedPareto {
                shape,
                scale,
                location,
            } => x >= location && (shape >= 0.0 || x <= location - scale / shape),
            Family::Bernoulli { value, .. } => x == 0.0 || x == value,
            Family::Mixture { ref components, .. } => components.iter().any(|c| c.in_support(x)),
        }
    }
}

fn pick_component(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap at the top: take the last component with weight
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn gamma_quantile(shape: f64, scale: f64, u: f64, spec: &DistributionSpec) -> f64 {
    // Wilson-Hilferty starting point
    let z = norm_quantile(u);
    let c = 1.0 / (9.0 * shape);
    let guess = shape * scale * (1.0 - c + z * c.sqrt()).powi(3);
    let mut hi = (shape + 10.0 * shape.sqrt() + 10.0) * scale;
    while gamma_p(shape, hi / scale) < u {
        hi *= 2.0;
    }
    invert_cdf(u, |x| spec.cdf(x), |x| spec.density(x), 0.0, hi, guess)
}

/// Mixture `[(1 - epsilon) * base, epsilon * tail]`.
pub fn make_tail_adjusted(
    base: &DistributionSpec,
    epsilon: f64,
    tail: &DistributionSpec,
) -> Result<DistributionSpec> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(DistributionError::ProbabilityDomain(epsilon));
    }
    if base.kind() == FamilyKind::Mixture || tail.kind() == FamilyKind::Mixture {
        return Err(DistributionError::Mixture(
            "tail adjustment needs non-mixture base and tail".into(),
        ));
    }
    let mut mix = DistributionSpec::mixture(
        vec![1.0 - epsilon, epsilon],
        vec![base.clone(), tail.clone()],
    )?;
    mix.unit = base.unit.clone();
    Ok(mix)
}

fn check_support<F: Fn(f64) -> bool>(
    family: &'static str,
    samples: &[f64],
    inside: F,
) -> Result<()> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(DistributionError::TooFewSamples {
            needed: MIN_FIT_SAMPLES,
            got: samples.len(),
        });
    }
    match samples.iter().position(|&x| !(x.is_finite() && inside(x))) {
        Some(index) => Err(DistributionError::Support {
            family,
            index,
            value: samples[index],
        }),
        None => Ok(()),
    }
}

fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Maximum-likelihood fit of `family` to `samples`.
///
/// Normal, Lognormal and Pareto are closed form; Weibull and Gamma solve the
/// profile score equation by safeguarded Newton iteration. The generalized
/// Pareto is fitted with its location fixed at 0 (see [`fit_gpd_exceedances`]).
pub fn fit_mle(family: FamilyKind, samples: &[f64]) -> Result<DistributionSpec> {
    match family {
        FamilyKind::Normal => {
            check_support("normal", samples, |_| true)?;
            let mean = mean_of(samples);
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / samples.len() as f64;
            if var <= 0.0 {
                return Err(DistributionError::Degenerate {
                    family: "normal",
                    reason: "all samples equal",
                });
            }
            DistributionSpec::normal(mean, var.sqrt())
        }
        FamilyKind::Lognormal => {
            check_support("lognormal", samples, |x| x > 0.0)?;
            let logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
            let mu = mean_of(&logs);
            let var = logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / logs.len() as f64;
            if var <= 0.0 {
                return Err(DistributionError::Degenerate {
                    family: "lognormal",
                    reason: "all samples equal",
                });
            }
            DistributionSpec::lognormal(mu, var.sqrt())
        }
        FamilyKind::Pareto => {
            check_support("pareto", samples, |x| x > 0.0)?;
            let minimum = samples.iter().copied().fold(f64::INFINITY, f64::min);
            let log_sum: f64 = samples.iter().map(|x| (x / minimum).ln()).sum();
            if log_sum <= 0.0 {
                return Err(DistributionError::Degenerate {
                    family: "pareto",
                    reason: "all samples equal",
                });
            }
            DistributionSpec::pareto(samples.len() as f64 / log_sum, minimum)
        }
        FamilyKind::Weibull => fit_weibull(samples),
        FamilyKind::Gamma => fit_gamma(samples),
        FamilyKind::GeneralizedPareto => fit_gpd_exceedances(samples, 0.0),
        FamilyKind::Bernoulli => {
            check_support("bernoulli", samples, |x| x == 0.0 || x == 1.0)?;
            DistributionSpec::bernoulli(mean_of(samples))
        }
        FamilyKind::Mixture => Err(DistributionError::UnsupportedFit("mixture")),
    }
}

fn fit_weibull(samples: &[f64]) -> Result<DistributionSpec> {
    check_support("weibull", samples, |x| x > 0.0)?;
    let logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
    let center = mean_of(&logs);
    let z: Vec<f64> = logs.iter().map(|l| l - center).collect();
    let z_max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sd = (z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64).sqrt();
    if sd <= 0.0 {
        return Err(DistributionError::Degenerate {
            family: "weibull",
            reason: "all samples equal",
        });
    }

    // score(k) = E_w[z] - 1/k with weights w ∝ exp(k z); increasing in k
    let score = |k: f64| -> (f64, f64) {
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for &zi in &z {
            let w = (k * (zi - z_max)).exp();
            s0 += w;
            s1 += w * zi;
            s2 += w * zi * zi;
        }
        let m1 = s1 / s0;
        let var = (s2 / s0 - m1 * m1).max(0.0);
        (m1 - 1.0 / k, var + 1.0 / (k * k))
    };

    let mut k = 1.2825 / sd;
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    let mut converged = false;
    for _ in 0..FIT_MAX_ITER {
        let (g, dg) = score(k);
        if g < 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let mut next = k - g / dg;
        if !(next > lo && next < hi) {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * k };
        }
        let step = (next - k).abs();
        k = next;
        if step <= FIT_REL_TOL * k {
            converged = true;
            break;
        }
    }
    let log_mean_pow = {
        let s: f64 = z.iter().map(|zi| (k * (zi - z_max)).exp()).sum::<f64>() / z.len() as f64;
        s.ln() + k * z_max
    };
    let scale = (center + log_mean_pow / k).exp();
    if !converged {
        return Err(DistributionError::NoConvergence {
            family: "weibull",
            iterations: FIT_MAX_ITER,
            last: vec![k, scale],
        });
    }
    DistributionSpec::weibull(k, scale)
}

fn fit_gamma(samples: &[f64]) -> Result<DistributionSpec> {
    check_support("gamma", samples, |x| x > 0.0)?;
    let mean = mean_of(samples);
    let mean_log = samples.iter().map(|x| x.ln()).sum::<f64>() / samples.len() as f64;
    let s = mean.ln() - mean_log;
    if s <= 0.0 || samples.iter().all(|&x| x == samples[0]) {
        return Err(DistributionError::Degenerate {
            family: "gamma",
            reason: "all samples equal",
        });
    }
    // Solve ln k - ψ(k) = s; left side decreasing in k.
    let mut k = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    let mut converged = false;
    for _ in 0..FIT_MAX_ITER {
        let f = k.ln() - special::digamma(k) - s;
        let df = 1.0 / k - special::trigamma(k);
        let mut next = k - f / df;
        if !(next > 0.0) || !next.is_finite() {
            next = 0.5 * k;
        }
        let step = (next - k).abs();
        k = next;
        if step <= FIT_REL_TOL * k {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(DistributionError::NoConvergence {
            family: "gamma",
            iterations: FIT_MAX_ITER,
            last: vec![k, mean / k],
        });
    }
    DistributionSpec::gamma(k, mean / k)
}

/// Fits a generalized Pareto with location fixed at `threshold` to samples
/// `>= threshold`, by maximizing the profile likelihood in `θ = ξ / β`.
pub fn fit_gpd_exceedances(samples: &[f64], threshold: f64) -> Result<DistributionSpec> {
    check_support("generalized_pareto", samples, |x| x >= threshold)?;
    let y: Vec<f64> = samples.iter().map(|x| x - threshold).collect();
    let n = y.len() as f64;
    let y_mean = mean_of(&y);
    let y_max = y.iter().copied().fold(0.0, f64::max);
    if y_mean <= 0.0 {
        return Err(DistributionError::Degenerate {
            family: "generalized_pareto",
            reason: "no mass above the threshold",
        });
    }

    let xi_of = |theta: f64| -> f64 {
        if theta == 0.0 {
            0.0
        } else {
            y.iter().map(|v| (theta * v).ln_1p()).sum::<f64>() / n
        }
    };
    let profile = |theta: f64| -> f64 {
        if theta == 0.0 {
            return -n * y_mean.ln() - n;
        }
        let xi = xi_of(theta);
        let beta = xi / theta;
        if !(beta > 0.0) || xi < -1.0 {
            return f64::NEG_INFINITY;
        }
        -n * beta.ln() - n * (1.0 + xi)
    };

    // coarse grid over θ·ȳ, then golden-section refinement around the best point
    let mut grid: Vec<f64> = Vec::new();
    let neg_limit = -1.0 / y_max;
    for j in 1..=40 {
        grid.push(neg_limit * (1.0 - 0.5_f64.powf(j as f64 / 4.0)));
    }
    grid.push(0.0);
    for j in 0..=100 {
        let t = 10f64.powf(-4.0 + 8.0 * j as f64 / 100.0);
        grid.push(t / y_mean);
    }
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    grid.dedup();
    let values: Vec<f64> = grid.iter().map(|&t| profile(t)).collect();
    let best = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Less))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(grid.len() - 1)];
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = profile(c);
    let mut fd = profile(d);
    let mut iterations = 0;
    while (b - a).abs() > FIT_REL_TOL * (a.abs() + b.abs()).max(1e-12 / y_mean) {
        if iterations >= FIT_MAX_ITER {
            let theta = 0.5 * (a + b);
            return Err(DistributionError::NoConvergence {
                family: "generalized_pareto",
                iterations,
                last: vec![xi_of(theta), theta],
            });
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = profile(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = profile(d);
        }
        iterations += 1;
    }
    let mut theta = 0.5 * (a + b);
    if profile(grid[best]) > profile(theta) {
        theta = grid[best];
    }
    let (shape, scale) = if theta == 0.0 {
        (0.0, y_mean)
    } else {
        let xi = xi_of(theta);
        (xi, xi / theta)
    };
    DistributionSpec::generalized_pareto(shape, scale, threshold)
}
