//! Discrete-time Markov models of per-stage operational states, AI
//! transition deltas, multi-stage cost simulation, and a small
//! continuous-time variant driven by a generator matrix.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution as _, Exp1};
use thiserror::Error;

use crate::distributions::DistributionSpec;

/// Row sums and entry bounds are checked to this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarkovError {
    #[error("markov schema error: {0}")]
    Schema(String),
    #[error("transition row {row} ({state}) is not stochastic: {reason}")]
    NotStochastic {
        row: usize,
        state: String,
        reason: String,
    },
    #[error("AI delta infeasible in row {row} ({state}): {reason}")]
    DeltaInfeasible {
        row: usize,
        state: String,
        reason: String,
    },
    #[error("initial distribution invalid: {0}")]
    Initial(String),
    #[error("generator row {row} invalid: {reason}")]
    Generator { row: usize, reason: String },
}

type Result<T> = std::result::Result<T, MarkovError>;

fn check_square(name: &str, m: &[Vec<f64>], n: usize) -> Result<()> {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(MarkovError::Schema(format!("{name} must be {n}x{n}")));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(MarkovError::Schema(format!("{name} has non-finite entries")));
    }
    Ok(())
}

fn row_problem(row: &[f64]) -> Option<String> {
    if let Some((j, v)) = row
        .iter()
        .enumerate()
        .find(|(_, v)| **v < -STOCHASTIC_TOL || **v > 1.0 + STOCHASTIC_TOL)
    {
        return Some(format!("entry {j} = {v} outside [0, 1]"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Some(format!("row sums to {sum}"));
    }
    None
}

/// Returns `P + Δ`, checking that every row stays stochastic.
pub fn apply_delta(states: &[String], transition: &[Vec<f64>], delta: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = transition.len();
    check_square("ai_delta", delta, n)?;
    let out: Vec<Vec<f64>> = transition
        .iter()
        .zip(delta)
        .map(|(p, d)| p.iter().zip(d).map(|(a, b)| a + b).collect())
        .collect();
    for (row, r) in out.iter().enumerate() {
        if let Some(reason) = row_problem(r) {
            return Err(MarkovError::DeltaInfeasible {
                row,
                state: states.get(row).cloned().unwrap_or_default(),
                reason,
            });
        }
    }
    Ok(out)
}

/// One stage's chain: states, baseline transition matrix, AI delta, per-state
/// cost distributions and an initial distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    states: Vec<String>,
    transition: Vec<Vec<f64>>,
    ai_delta: Vec<Vec<f64>>,
    costs: Vec<DistributionSpec>,
    initial: Vec<f64>,
}

impl MarkovModel {
    /// Validates and builds a model. `ai_delta = None` means no AI shift.
    pub fn new(
        states: Vec<String>,
        transition: Vec<Vec<f64>>,
        ai_delta: Option<Vec<Vec<f64>>>,
        costs: &BTreeMap<String, DistributionSpec>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(MarkovError::Schema("at least one state required".into()));
        }
        for (i, s) in states.iter().enumerate() {
            if states[..i].contains(s) {
                return Err(MarkovError::Schema(format!("duplicate state `{s}`")));
            }
        }
        check_square("transition", &transition, n)?;
        for (row, r) in transition.iter().enumerate() {
            if let Some(reason) = row_problem(r) {
                return Err(MarkovError::NotStochastic {
                    row,
                    state: states[row].clone(),
                    reason,
                });
            }
        }
        let ai_delta = ai_delta.unwrap_or_else(|| vec![vec![0.0; n]; n]);
        apply_delta(&states, &transition, &ai_delta)?;

        let costs = states
            .iter()
            .map(|s| {
                costs
                    .get(s)
                    .cloned()
                    .ok_or_else(|| MarkovError::Schema(format!("no cost distribution for state `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;

        if initial.len() != n {
            return Err(MarkovError::Initial(format!("{} entries for {n} states", initial.len())));
        }
        if initial.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(MarkovError::Initial("entries must be finite and >= 0".into()));
        }
        let total: f64 = initial.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(MarkovError::Initial(format!("sums to {total}")));
        }
        Ok(Self {
            states,
            transition,
            ai_delta,
            costs,
            initial,
        })
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn ai_delta(&self) -> &[Vec<f64>] {
        &self.ai_delta
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn cost(&self, state: usize) -> &DistributionSpec {
        &self.costs[state]
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// `P` when the stage does not use AI, otherwise the validated `P + Δ`.
    pub fn apply_ai_delta(&self, stage_uses_ai: bool) -> Result<Vec<Vec<f64>>> {
        if stage_uses_ai {
            apply_delta(&self.states, &self.transition, &self.ai_delta)
        } else {
            Ok(self.transition.clone())
        }
    }

    /// `α Pᵗ` under the baseline matrix.
    pub fn state_distribution(&self, t: usize) -> Vec<f64> {
        let n = self.states.len();
        let mut dist = self.initial.clone();
        for _ in 0..t {
            let mut next = vec![0.0; n];
            for (i, &mass) in dist.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                for (j, p) in self.transition[i].iter().enumerate() {
                    next[j] += mass * p;
                }
            }
            dist = next;
        }
        dist
    }
}

fn cumulative(row: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    row.iter()
        .map(|p| {
            acc += p.max(0.0);
            acc
        })
        .collect()
}

fn draw_index(cum: &[f64], u: f64) -> usize {
    let total = *cum.last().expect("non-empty row");
    let target = u * total;
    match cum.iter().position(|c| target < *c) {
        Some(i) => i,
        None => {
            // rounding gap at the top: last state with positive mass
            let mut i = cum.len() - 1;
            while i > 0 && cum[i] == cum[i - 1] {
                i -= 1;
            }
            i
        }
    }
}

/// A validated sequence of stages with AI flags applied, ready to simulate.
#[derive(Debug, Clone)]
pub struct StageChain {
    states: Vec<String>,
    initial_cum: Vec<f64>,
    // per stage, per from-state cumulative transition row
    rows: Vec<Vec<Vec<f64>>>,
    costs: Vec<Vec<DistributionSpec>>,
}

/// Result of one simulated pass through the stages.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutcome {
    /// Initial state followed by the state entered at each stage.
    pub trajectory: Vec<usize>,
    pub total_cost: f64,
}

impl StageChain {
    /// Applies each stage's AI flag (validating `P + Δ` every time). States are
    /// matched across stages by name; the first stage fixes the ordering and
    /// the initial distribution.
    pub fn new(models: &[MarkovModel], ai_flags: &[bool]) -> Result<Self> {
        if models.is_empty() {
            return Err(MarkovError::Schema("at least one stage required".into()));
        }
        if models.len() != ai_flags.len() {
            return Err(MarkovError::Schema(format!(
                "{} stages but {} AI flags",
                models.len(),
                ai_flags.len()
            )));
        }
        let states = models[0].states.clone();
        let mut rows = Vec::with_capacity(models.len());
        let mut costs = Vec::with_capacity(models.len());
        for (stage, (model, &ai)) in models.iter().zip(ai_flags).enumerate() {
            if model.states.len() != states.len() {
                return Err(MarkovError::Schema(format!("stage {stage} has a different state set")));
            }
            // perm[k] = index in this model of canonical state k
            let perm = states
                .iter()
                .map(|s| {
                    model
                        .state_index(s)
                        .ok_or_else(|| MarkovError::Schema(format!("stage {stage} lacks state `{s}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            let p = model.apply_ai_delta(ai)?;
            rows.push(
                perm.iter()
                    .map(|&i| cumulative(&perm.iter().map(|&j| p[i][j]).collect::<Vec<_>>()))
                    .collect(),
            );
            costs.push(perm.iter().map(|&i| model.costs[i].clone()).collect());
        }
        Ok(Self {
            states,
            initial_cum: cumulative(&models[0].initial),
            rows,
            costs,
        })
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn stages(&self) -> usize {
        self.rows.len()
    }

    /// Simulates one pass, recording the trajectory.
    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> ChainOutcome {
        let mut state = draw_index(&self.initial_cum, rng.random::<f64>());
        let mut trajectory = Vec::with_capacity(self.rows.len() + 1);
        trajectory.push(state);
        let mut total_cost = 0.0;
        for (rows, costs) in self.rows.iter().zip(&self.costs) {
            state = draw_index(&rows[state], rng.random::<f64>());
            trajectory.push(state);
            total_cost += costs[state].sample(rng);
        }
        ChainOutcome {
            trajectory,
            total_cost,
        }
    }

    /// Per-stage costs of one pass, using the same draws as
    /// [`simulate`](Self::simulate).
    pub fn stage_costs<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut state = draw_index(&self.initial_cum, rng.random::<f64>());
        self.rows
            .iter()
            .zip(&self.costs)
            .map(|(rows, costs)| {
                state = draw_index(&rows[state], rng.random::<f64>());
                costs[state].sample(rng)
            })
            .collect()
    }
}

/// Convenience wrapper: validates the stage list and simulates once.
pub fn simulate_stage_chain<R: Rng + ?Sized>(
    models: &[MarkovModel],
    ai_flags: &[bool],
    rng: &mut R,
) -> Result<(Vec<String>, f64)> {
    let chain = StageChain::new(models, ai_flags)?;
    let out = chain.simulate(rng);
    let names = out.trajectory.iter().map(|&i| chain.states[i].clone()).collect();
    Ok((names, out.total_cost))
}

/// Continuous-time chain given by its generator `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    states: Vec<String>,
    generator: Vec<Vec<f64>>,
}

/// A visit in a continuous-time trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Holding {
    pub state: usize,
    pub entered_at: f64,
    pub duration: f64,
}

impl GeneratorModel {
    pub fn new(states: Vec<String>, generator: Vec<Vec<f64>>) -> Result<Self> {
        let n = states.len();
        check_square("generator", &generator, n)?;
        for (i, row) in generator.iter().enumerate() {
            if let Some(j) = (0..n).find(|&j| j != i && row[j] < 0.0) {
                return Err(MarkovError::Generator {
                    row: i,
                    reason: format!("negative off-diagonal rate at column {j}"),
                });
            }
            let sum: f64 = row.iter().sum();
            if sum.abs() > STOCHASTIC_TOL {
                return Err(MarkovError::Generator {
                    row: i,
                    reason: format!("row sums to {sum}, expected 0"),
                });
            }
        }
        Ok(Self { states, generator })
    }

    /// Builds `Q` from off-diagonal rates; diagonal entries are overwritten.
    pub fn from_rates(states: Vec<String>, mut rates: Vec<Vec<f64>>) -> Result<Self> {
        let n = states.len();
        check_square("rates", &rates, n)?;
        for (i, row) in rates.iter_mut().enumerate() {
            row[i] = 0.0;
            row[i] = -row.iter().sum::<f64>();
        }
        Self::new(states, rates)
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn generator(&self) -> &[Vec<f64>] {
        &self.generator
    }

    /// Simulates from `start` until `horizon`. The last holding is truncated
    /// at the horizon; absorbing states hold until the horizon.
    pub fn simulate<R: Rng + ?Sized>(&self, start: usize, horizon: f64, rng: &mut R) -> Vec<Holding> {
        let mut out = Vec::new();
        let mut t = 0.0;
        let mut state = start;
        loop {
            let rate = -self.generator[state][state];
            if rate <= 0.0 {
                out.push(Holding {
                    state,
                    entered_at: t,
                    duration: horizon - t,
                });
                return out;
            }
            let e: f64 = Exp1.sample(rng);
            let hold = e / rate;
            if t + hold >= horizon {
                out.push(Holding {
                    state,
                    entered_at: t,
                    duration: horizon - t,
                });
                return out;
            }
            out.push(Holding {
                state,
                entered_at: t,
                duration: hold,
            });
            t += hold;
            let target = rng.random::<f64>() * rate;
            let mut acc = 0.0;
            let mut next = state;
            for (j, &q) in self.generator[state].iter().enumerate() {
                if j == state || q <= 0.0 {
                    continue;
                }
                acc += q;
                next = j;
                if target < acc {
                    break;
                }
            }
            state = next;
        }
    }
}
