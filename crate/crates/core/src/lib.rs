//! Scenario-based operational risk simulation.
//!
//! Workflows are decomposed into random sub-events whose outcomes are coupled
//! either through a Gaussian copula or a staged Markov chain, aggregated into
//! a total, and summarized by mean, exceedance probabilities, VaR and ES. Each
//! event carries a baseline and an AI-assisted distribution, so the same
//! pipeline can be evaluated with no, some, or all events AI-assisted.
//!
//! ```
//! use scenario_risk::{parse_scenario, run_monte_carlo_with, summarize, EngineOptions, LoadOptions, ScenarioMode};
//!
//! let text = r#"{
//!   "events": [
//!     {"name": "a", "baseline": {"family": "normal", "mean": 0, "stddev": 1},
//!                   "ai": {"family": "normal", "mean": 0, "stddev": 0.5}},
//!     {"name": "b", "baseline": {"family": "gamma", "shape": 2, "scale": 1},
//!                   "ai": {"family": "gamma", "shape": 2, "scale": 0.8}}
//!   ],
//!   "dependency": {"type": "gaussian_copula", "correlation": {"non_ai": [[1, 0.3], [0.3, 1]]}},
//!   "thresholds": [3],
//!   "alphas": [0.95],
//!   "n_samples": 2000,
//!   "seed": 1
//! }"#;
//! let pipeline = parse_scenario(text, LoadOptions::default()).unwrap();
//! let samples = run_monte_carlo_with(&pipeline, &ScenarioMode::NonAi, &EngineOptions::with_workers(2)).unwrap();
//! let report = summarize(&samples, pipeline.thresholds(), pipeline.alphas()).unwrap();
//! assert!(report.es[0].value >= report.var[0].value);
//! ```

pub mod calibration;
pub mod copula;
pub mod distributions;
pub mod markov;
pub mod report;
pub mod risk;
pub mod rng;
pub mod scenario;
pub mod special;

pub use calibration::{
    ingest_oracle_samples, ks_statistic, ks_test, refit_update, CalibrationError, CalibrationResult, Decision,
    KsOutcome,
};
pub use copula::{fit_gaussian_copula, validate_correlation, CopulaError, CorrelationModel};
pub use distributions::{
    fit_mle, make_tail_adjusted, DistributionError, DistributionSpec, Family, FamilyKind, Moments,
};
pub use markov::{apply_delta, GeneratorModel, MarkovError, MarkovModel, StageChain};
pub use report::{histogram, render_comparison, render_report, Format};
pub use risk::{
    compare_scenarios, empirical_es, empirical_var, exceedance_prob, run_monte_carlo, run_monte_carlo_with,
    summarize, Comparison, EngineOptions, RiskError, RiskReport, SampleSet,
};
pub use rng::{RandomStream, StreamFamily};
pub use scenario::{
    load_scenario, load_scenario_with, parse_scenario, LoadOptions, ModeKind, PipelineSpec, ScenarioConfig,
    ScenarioError, ScenarioMode,
};
