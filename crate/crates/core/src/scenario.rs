//! Pipeline definitions, scenario modes, config loading and outcome
//! aggregation.
//!
//! A scenario config is a JSON document (`"schema_version": 1`) listing the
//! events of a linear pipeline, the dependency structure (Gaussian copula with
//! one correlation matrix per mode, or a staged Markov chain), the aggregator,
//! and the risk-metric grid.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::copula::{validate_correlation, validate_correlation_with_jitter, CopulaError, CorrelationModel};
use crate::distributions::DistributionSpec;
use crate::markov::{MarkovError, MarkovModel};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_N_SAMPLES: usize = 100_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("dimension mismatch in `{field}`: expected {expected}, got {got}")]
    Dimension {
        field: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown event `{0}`")]
    UnknownEvent(String),
    #[error("unknown aggregator `{0}`")]
    UnknownAggregator(String),
    #[error("unknown scenario mode `{0}` (expected non-ai, partial-ai or full-ai)")]
    UnknownMode(String),
}

type Result<T> = std::result::Result<T, ScenarioError>;

fn invalid(field: impl Into<String>, message: impl fmt::Display) -> ScenarioError {
    ScenarioError::Validation {
        field: field.into(),
        message: message.to_string(),
    }
}

/// One sub-event with its baseline and AI distributions. Markov pipelines
/// draw costs from the chain, so there the distributions are optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<DistributionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ai: Option<DistributionSpec>,
}

/// Correlation matrices per scenario mode. Omitted modes fall back to `non_ai`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationByMode {
    pub non_ai: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partial_ai: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_ai: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub transition: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ai_delta: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DependencyConfig {
    GaussianCopula {
        correlation: CorrelationByMode,
    },
    Markov {
        states: Vec<String>,
        stages: Vec<StageConfig>,
        costs: BTreeMap<String, DistributionSpec>,
        initial: Vec<f64>,
    },
}

/// How event outcomes combine into `X_total`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum Aggregator {
    #[default]
    Sum,
    Custom(String),
}

impl Aggregator {
    pub fn name(&self) -> &str {
        match self {
            Aggregator::Sum => "sum",
            Aggregator::Custom(name) => name,
        }
    }
}

impl Serialize for Aggregator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Aggregator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Ok(if name == "sum" {
            Aggregator::Sum
        } else {
            Aggregator::Custom(name)
        })
    }
}

pub type AggregateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Named aggregation hooks. The default registry only knows `sum`.
#[derive(Clone)]
pub struct AggregatorRegistry {
    hooks: HashMap<String, AggregateFn>,
}

impl fmt::Debug for AggregatorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<&String> = self.hooks.keys().collect();
        names.sort();
        f.debug_struct("AggregatorRegistry").field("hooks", &names).finish()
    }
}

impl Default for AggregatorRegistry {
    fn default() -> Self {
        let mut hooks: HashMap<String, AggregateFn> = HashMap::new();
        hooks.insert("sum".into(), Arc::new(|xs: &[f64]| xs.iter().sum()));
        Self { hooks }
    }
}

impl AggregatorRegistry {
    pub fn register(&mut self, name: impl Into<String>, hook: AggregateFn) {
        self.hooks.insert(name.into(), hook);
    }

    pub fn resolve(&self, aggregator: &Aggregator) -> Result<AggregateFn> {
        self.hooks
            .get(aggregator.name())
            .cloned()
            .ok_or_else(|| ScenarioError::UnknownAggregator(aggregator.name().to_string()))
    }
}

/// Applies `aggregator` from the default registry.
pub fn aggregate(xs: &[f64], aggregator: &Aggregator) -> Result<f64> {
    Ok(AggregatorRegistry::default().resolve(aggregator)?(xs))
}

/// Declared AI subsets for the partial mode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModesConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partial_ai: Option<BTreeSet<String>>,
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_n_samples() -> usize {
    DEFAULT_N_SAMPLES
}

/// The on-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    /// Unit label of `X_total`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    pub events: Vec<EventSpec>,
    pub dependency: DependencyConfig,
    #[serde(default)]
    pub aggregator: Aggregator,
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub modes: ModesConfig,
}

/// Which events use their AI distribution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", content = "ai_events", rename_all = "snake_case")]
pub enum ScenarioMode {
    NonAi,
    PartialAi(BTreeSet<String>),
    FullAi,
}

impl ScenarioMode {
    pub fn label(&self) -> &'static str {
        match self {
            ScenarioMode::NonAi => "Non-AI",
            ScenarioMode::PartialAi(_) => "Partial-AI",
            ScenarioMode::FullAi => "Full-AI",
        }
    }

    pub fn uses_ai(&self, event: &str) -> bool {
        match self {
            ScenarioMode::NonAi => false,
            ScenarioMode::PartialAi(set) => set.contains(event),
            ScenarioMode::FullAi => true,
        }
    }
}

impl fmt::Display for ScenarioMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Mode selector as typed on the command line; the partial set is resolved
/// against a pipeline by [`PipelineSpec::resolve_mode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    NonAi,
    PartialAi,
    FullAi,
}

impl FromStr for ModeKind {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "non-ai" | "nonai" | "baseline" => Ok(ModeKind::NonAi),
            "partial-ai" | "partial" => Ok(ModeKind::PartialAi),
            "full-ai" | "full" => Ok(ModeKind::FullAi),
            _ => Err(ScenarioError::UnknownMode(s.to_string())),
        }
    }
}

/// Distributions and dependency parameters chosen for one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSelection {
    pub marginals: Vec<DistributionSpec>,
    pub ai_flags: Vec<bool>,
    pub correlation: Option<CorrelationModel>,
}

#[derive(Debug, Clone, PartialEq)]
enum Dependency {
    Copula {
        non_ai: CorrelationModel,
        partial_ai: Option<CorrelationModel>,
        full_ai: Option<CorrelationModel>,
    },
    Markov(Vec<MarkovModel>),
}

/// A fully validated pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    config: ScenarioConfig,
    dependency: Dependency,
}

/// Options applied while loading.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LoadOptions {
    /// Diagonal jitter repair for correlation matrices (off by default).
    pub jitter: Option<f64>,
}

impl PipelineSpec {
    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        Self::from_config_with(config, LoadOptions::default())
    }

    pub fn from_config_with(mut config: ScenarioConfig, options: LoadOptions) -> Result<Self> {
        if config.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", config.schema_version),
            ));
        }
        if config.events.is_empty() {
            return Err(invalid("events", "at least one event required"));
        }
        let mut seen = BTreeSet::new();
        for (i, e) in config.events.iter().enumerate() {
            if e.name.is_empty() {
                return Err(invalid(format!("events[{i}].name"), "must not be empty"));
            }
            if !seen.insert(e.name.as_str()) {
                return Err(invalid(format!("events[{i}].name"), format!("duplicate event `{}`", e.name)));
            }
        }
        for (i, t) in config.thresholds.iter().enumerate() {
            if !t.is_finite() {
                return Err(invalid(format!("thresholds[{i}]"), "must be finite"));
            }
        }
        for (i, a) in config.alphas.iter().enumerate() {
            if !(*a > 0.0 && *a < 1.0) {
                return Err(invalid(format!("alphas[{i}]"), format!("{a} is outside (0, 1)")));
            }
        }
        AggregatorRegistry::default().resolve(&config.aggregator)?;
        if let Some(set) = &config.modes.partial_ai {
            check_partial_set(&config.events, set)?;
        }

        let n_events = config.events.len();
        let dependency = match &mut config.dependency {
            DependencyConfig::GaussianCopula { correlation } => {
                for (i, e) in config.events.iter().enumerate() {
                    if e.baseline.is_none() {
                        return Err(invalid(format!("events[{i}].baseline"), "required for copula pipelines"));
                    }
                    if e.ai.is_none() {
                        return Err(invalid(format!("events[{i}].ai"), "required for copula pipelines"));
                    }
                }
                let non_ai = build_correlation(&mut correlation.non_ai, "dependency.correlation.non_ai", n_events, options)?;
                let partial_ai = correlation
                    .partial_ai
                    .as_mut()
                    .map(|m| build_correlation(m, "dependency.correlation.partial_ai", n_events, options))
                    .transpose()?;
                let full_ai = correlation
                    .full_ai
                    .as_mut()
                    .map(|m| build_correlation(m, "dependency.correlation.full_ai", n_events, options))
                    .transpose()?;
                Dependency::Copula {
                    non_ai,
                    partial_ai,
                    full_ai,
                }
            }
            DependencyConfig::Markov {
                states,
                stages,
                costs,
                initial,
            } => {
                if stages.len() != n_events {
                    return Err(ScenarioError::Dimension {
                        field: "dependency.stages".into(),
                        expected: n_events,
                        got: stages.len(),
                    });
                }
                let models = stages
                    .iter()
                    .enumerate()
                    .map(|(i, st)| {
                        MarkovModel::new(
                            states.clone(),
                            st.transition.clone(),
                            st.ai_delta.clone(),
                            costs,
                            initial.clone(),
                        )
                        .map_err(|e| markov_field(i, e))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Dependency::Markov(models)
            }
        };

        let pipeline = Self { config, dependency };
        for w in pipeline.unit_warnings() {
            log::warn!("{w}");
        }
        for w in pipeline.sanity_warnings() {
            log::warn!("{w}");
        }
        Ok(pipeline)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn events(&self) -> &[EventSpec] {
        &self.config.events
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.config.thresholds
    }

    pub fn alphas(&self) -> &[f64] {
        &self.config.alphas
    }

    pub fn n_samples(&self) -> usize {
        self.config.n_samples
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn aggregator(&self) -> &Aggregator {
        &self.config.aggregator
    }

    pub fn is_markov(&self) -> bool {
        matches!(self.dependency, Dependency::Markov(_))
    }

    pub fn markov_stages(&self) -> Option<&[MarkovModel]> {
        match &self.dependency {
            Dependency::Markov(m) => Some(m),
            Dependency::Copula { .. } => None,
        }
    }

    /// Returns a copy with a different seed and/or sample count.
    pub fn with_overrides(&self, seed: Option<u64>, n_samples: Option<usize>) -> Self {
        let mut out = self.clone();
        if let Some(s) = seed {
            out.config.seed = s;
        }
        if let Some(n) = n_samples {
            out.config.n_samples = n;
        }
        out
    }

    /// Replaces the metric grid, with the same validation as loading.
    pub fn with_metric_grid(&self, thresholds: Vec<f64>, alphas: Vec<f64>) -> Result<Self> {
        let mut config = self.config.clone();
        config.thresholds = thresholds;
        config.alphas = alphas;
        Self::from_config(config)
    }

    /// Resolves a mode selector; the partial set defaults to the config's
    /// `modes.partial_ai`.
    pub fn resolve_mode(&self, kind: ModeKind, ai_events: Option<BTreeSet<String>>) -> Result<ScenarioMode> {
        let mode = match kind {
            ModeKind::NonAi => ScenarioMode::NonAi,
            ModeKind::FullAi => ScenarioMode::FullAi,
            ModeKind::PartialAi => {
                let set = ai_events
                    .or_else(|| self.config.modes.partial_ai.clone())
                    .ok_or_else(|| invalid("modes.partial_ai", "partial-ai mode needs a set of AI events"))?;
                ScenarioMode::PartialAi(set)
            }
        };
        self.check_mode(&mode)?;
        Ok(mode)
    }

    pub fn check_mode(&self, mode: &ScenarioMode) -> Result<()> {
        if let ScenarioMode::PartialAi(set) = mode {
            check_partial_set(&self.config.events, set)?;
        }
        Ok(())
    }

    /// One line per event whose unit label differs from the pipeline's.
    pub fn unit_warnings(&self) -> Vec<String> {
        let labels: BTreeSet<&str> = self
            .config
            .events
            .iter()
            .filter_map(|e| e.unit.as_deref())
            .collect();
        if labels.len() <= 1 {
            return Vec::new();
        }
        let total = self.config.unit.as_deref().unwrap_or("unlabelled");
        vec![format!(
            "event units differ ({}); X_total is their literal sum reported in `{total}`",
            labels.into_iter().collect::<Vec<_>>().join(", ")
        )]
    }

    /// Events whose AI distribution equals the baseline.
    pub fn sanity_warnings(&self) -> Vec<String> {
        self.config
            .events
            .iter()
            .filter(|e| e.baseline.is_some() && e.baseline == e.ai)
            .map(|e| format!("event `{}` has identical baseline and AI distributions", e.name))
            .collect()
    }
}

fn check_partial_set(events: &[EventSpec], set: &BTreeSet<String>) -> Result<()> {
    if set.is_empty() {
        return Err(invalid("modes.partial_ai", "partial-ai set must not be empty"));
    }
    for name in set {
        if !events.iter().any(|e| &e.name == name) {
            return Err(ScenarioError::UnknownEvent(name.clone()));
        }
    }
    Ok(())
}

fn build_correlation(
    matrix: &mut Vec<Vec<f64>>,
    field: &str,
    n_events: usize,
    options: LoadOptions,
) -> Result<CorrelationModel> {
    if matrix.len() != n_events {
        return Err(ScenarioError::Dimension {
            field: field.into(),
            expected: n_events,
            got: matrix.len(),
        });
    }
    let model = match options.jitter {
        Some(j) if j > 0.0 => validate_correlation_with_jitter(matrix.clone(), j),
        _ => validate_correlation(matrix.clone()),
    }
    .map_err(|e: CopulaError| invalid(field, e))?;
    *matrix = model.matrix().to_vec();
    Ok(model)
}

fn markov_field(stage: usize, e: MarkovError) -> ScenarioError {
    let field = match &e {
        MarkovError::Initial(_) => "dependency.initial".to_string(),
        MarkovError::Schema(m) if m.contains("cost") => "dependency.costs".to_string(),
        MarkovError::DeltaInfeasible { .. } => format!("dependency.stages[{stage}].ai_delta"),
        _ => format!("dependency.stages[{stage}]"),
    };
    invalid(field, e)
}

/// Chooses the distributions and dependency parameters of `mode`.
pub fn select_distributions(pipeline: &PipelineSpec, mode: &ScenarioMode) -> Result<ModeSelection> {
    pipeline.check_mode(mode)?;
    let events = pipeline.events();
    let ai_flags: Vec<bool> = events.iter().map(|e| mode.uses_ai(&e.name)).collect();
    let marginals = events
        .iter()
        .zip(&ai_flags)
        .filter_map(|(e, &ai)| if ai { e.ai.clone() } else { e.baseline.clone() })
        .collect();
    let correlation = match &pipeline.dependency {
        Dependency::Copula {
            non_ai,
            partial_ai,
            full_ai,
        } => Some(
            match mode {
                ScenarioMode::NonAi => Some(non_ai),
                ScenarioMode::PartialAi(_) => partial_ai.as_ref(),
                ScenarioMode::FullAi => full_ai.as_ref(),
            }
            .unwrap_or(non_ai)
            .clone(),
        ),
        Dependency::Markov(_) => None,
    };
    Ok(ModeSelection {
        marginals,
        ai_flags,
        correlation,
    })
}

fn parse_error(e: serde_json::Error) -> ScenarioError {
    ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str, options: LoadOptions) -> Result<PipelineSpec> {
    let config: ScenarioConfig = serde_json::from_str(text).map_err(parse_error)?;
    PipelineSpec::from_config_with(config, options)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<PipelineSpec> {
    load_scenario_with(path, LoadOptions::default())
}

pub fn load_scenario_with(path: impl AsRef<Path>, options: LoadOptions) -> Result<PipelineSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, options)
}

pub fn to_json(pipeline: &PipelineSpec) -> String {
    serde_json::to_string_pretty(&pipeline.config).expect("scenario config serializes")
}

pub fn save_scenario(pipeline: &PipelineSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json(pipeline) + "\n").map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}
