//! Sampling-based checks of the copula, Markov and engine layers against
//! closed-form or enumerated oracles.

use std::collections::BTreeMap;

use scenario_risk::copula::{fit_gaussian_copula, validate_correlation, CorrelationModel};
use scenario_risk::distributions::{make_tail_adjusted, DistributionSpec};
use scenario_risk::markov::{simulate_stage_chain, GeneratorModel, MarkovModel, StageChain};
use scenario_risk::risk::{empirical_var, run_monte_carlo_with, summarize, EngineOptions};
use scenario_risk::rng::RandomStream;
use scenario_risk::scenario::{load_scenario, ScenarioMode};
use scenario_risk::special::norm_quantile;

const N: usize = 1_000_000;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut r = vec![0.0; xs.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn columns(model: &CorrelationModel, marginals: &[DistributionSpec], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = RandomStream::new(seed, 0);
    let mut cols = vec![Vec::with_capacity(n); marginals.len()];
    for _ in 0..n {
        for (c, x) in cols.iter_mut().zip(model.joint_sample(marginals, &mut rng).unwrap()) {
            c.push(x);
        }
    }
    cols
}

#[test]
fn normal_sample_mean() {
    let d = DistributionSpec::normal(0.0, 15.0).unwrap();
    let mut rng = RandomStream::new(1, 0);
    let xs: Vec<f64> = (0..N).map(|_| d.sample(&mut rng)).collect();
    assert!(mean(&xs).abs() <= 0.05, "{}", mean(&xs));
}

#[test]
fn contaminated_tail_fraction() {
    let d = make_tail_adjusted(
        &DistributionSpec::gamma(8.0, 1.0).unwrap(),
        0.02,
        &DistributionSpec::pareto(1.5, 50.0).unwrap(),
    )
    .unwrap();
    let mut rng = RandomStream::new(2, 0);
    let frac = (0..N).filter(|_| d.sample(&mut rng) >= 50.0).count() as f64 / N as f64;
    // (1 - ε)(1 - F_Γ(50)) + ε with F_Γ(50) ≈ 1
    let oracle = 0.98 * (1.0 - DistributionSpec::gamma(8.0, 1.0).unwrap().cdf(50.0)) + 0.02;
    assert!((frac - oracle).abs() <= 0.001, "{frac} vs {oracle}");
}

#[test]
fn identity_copula_is_independent() {
    let m = CorrelationModel::identity(3).unwrap();
    let mut rng = RandomStream::new(3, 0);
    let mut cols = vec![Vec::with_capacity(N); 3];
    for _ in 0..N {
        for (c, u) in cols.iter_mut().zip(m.sample_copula(&mut rng)) {
            c.push(u);
        }
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let r = pearson(&cols[i], &cols[j]);
        assert!(r.abs() <= 0.004, "pair ({i},{j}): {r}");
    }
}

#[test]
fn joint_sample_identity_means() {
    let marginals = [
        DistributionSpec::gamma(5.0, 2.0).unwrap(),
        DistributionSpec::lognormal(1.0, 0.5).unwrap(),
    ];
    let cols = columns(&CorrelationModel::identity(2).unwrap(), &marginals, N, 4);
    assert!((mean(&cols[0]) - 10.0).abs() <= 0.02, "{}", mean(&cols[0]));
    assert!((mean(&cols[1]) - 3.080).abs() <= 0.01, "{}", mean(&cols[1]));
}

#[test]
fn strong_dependence_rank_correlation() {
    let model = validate_correlation(vec![vec![1.0, 0.99], vec![0.99, 1.0]]).unwrap();
    let g = DistributionSpec::gamma(3.0, 1.0).unwrap();
    let cols = columns(&model, &[g.clone(), g], 200_000, 5);
    let rho_s = pearson(&ranks(&cols[0]), &ranks(&cols[1]));
    assert!(rho_s > 0.97, "{rho_s}");
}

#[test]
fn dependence_preserves_marginal_moments() {
    let model = validate_correlation(vec![
        vec![1.0, 0.6, -0.3],
        vec![0.6, 1.0, 0.2],
        vec![-0.3, 0.2, 1.0],
    ])
    .unwrap();
    let marginals = [
        DistributionSpec::normal(0.0, 15.0).unwrap(),
        DistributionSpec::gamma(5.0, 2.0).unwrap(),
        DistributionSpec::weibull(1.5, 20.0).unwrap(),
    ];
    let cols = columns(&model, &marginals, N, 6);
    for (c, m) in cols.iter().zip(&marginals) {
        let mo = m.moments();
        let z = (mean(c) - mo.mean).abs() / (mo.variance / N as f64).sqrt();
        assert!(z <= 4.0, "{:?}: z {z}", m.kind());
    }
}

#[test]
fn permutation_equivariance() {
    let a = DistributionSpec::normal(0.0, 15.0).unwrap();
    let b = DistributionSpec::gamma(5.0, 2.0).unwrap();
    let m1 = validate_correlation(vec![vec![1.0, 0.3], vec![0.3, 1.0]]).unwrap();
    let fwd = columns(&m1, &[a.clone(), b.clone()], N, 7);
    let rev = columns(&m1, &[b, a], N, 8);
    for (x, y) in [(&fwd[0], &rev[1]), (&fwd[1], &rev[0])] {
        let se = ((var(x) + var(y)) / N as f64).sqrt();
        assert!((mean(x) - mean(y)).abs() <= 4.0 * se);
    }
    let r1 = pearson(&fwd[0], &fwd[1]);
    let r2 = pearson(&rev[1], &rev[0]);
    assert!((r1 - r2).abs() <= 0.006, "{r1} vs {r2}");
}

#[test]
fn copula_fit_round_trip() {
    let marginals = [
        DistributionSpec::gamma(5.0, 2.0).unwrap(),
        DistributionSpec::lognormal(1.0, 0.5).unwrap(),
    ];
    let n = 100_000;
    let rows = |model: &CorrelationModel, seed| {
        let cols = columns(model, &marginals, n, seed);
        (0..n).map(|i| vec![cols[0][i], cols[1][i]]).collect::<Vec<_>>()
    };
    let dep = validate_correlation(vec![vec![1.0, 0.3], vec![0.3, 1.0]]).unwrap();
    let fitted = fit_gaussian_copula(&rows(&dep, 9), &marginals).unwrap();
    assert!((fitted.matrix()[0][1] - 0.3).abs() <= 0.01, "{:?}", fitted.matrix());
    let ind = fit_gaussian_copula(&rows(&CorrelationModel::identity(2).unwrap(), 10), &marginals).unwrap();
    assert!(ind.matrix()[0][1].abs() <= 0.01, "{:?}", ind.matrix());
}

fn constant(v: f64) -> DistributionSpec {
    DistributionSpec::scaled_bernoulli(1.0, v).unwrap()
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

#[test]
fn one_stage_two_state_expected_cost() {
    let costs: BTreeMap<String, DistributionSpec> =
        [("Operational".to_string(), constant(1.0)), ("MajorFail".to_string(), constant(100.0))].into();
    let model = MarkovModel::new(
        names(&["Operational", "MajorFail"]),
        vec![vec![0.9, 0.1], vec![0.0, 1.0]],
        None,
        &costs,
        vec![1.0, 0.0],
    )
    .unwrap();
    let chain = StageChain::new(std::slice::from_ref(&model), &[false]).unwrap();
    let mut rng = RandomStream::new(11, 0);
    let total: f64 = (0..N).map(|_| chain.simulate(&mut rng).total_cost).sum();
    let m = total / N as f64;
    assert!((m - 10.9).abs() <= 0.1, "{m}");
    let (traj, cost) = simulate_stage_chain(&[model], &[false], &mut rng).unwrap();
    assert_eq!(traj.len(), 2);
    assert_eq!(traj[0], "Operational");
    assert!(cost == 1.0 || cost == 100.0);
}

#[test]
fn one_step_frequencies_match_rows() {
    let p = vec![vec![0.9, 0.08, 0.02], vec![0.6, 0.3, 0.1], vec![0.3, 0.3, 0.4]];
    let costs: BTreeMap<String, DistributionSpec> =
        ["a", "b", "c"].iter().map(|s| (s.to_string(), constant(1.0))).collect();
    for start in 0..3 {
        let mut initial = vec![0.0; 3];
        initial[start] = 1.0;
        let model = MarkovModel::new(names(&["a", "b", "c"]), p.clone(), None, &costs, initial).unwrap();
        let chain = StageChain::new(&[model], &[false]).unwrap();
        let mut rng = RandomStream::new(12, start as u64);
        let n = 300_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[chain.simulate(&mut rng).trajectory[1]] += 1;
        }
        for j in 0..3 {
            let f = counts[j] as f64 / n as f64;
            let se = (p[start][j] * (1.0 - p[start][j]) / n as f64).sqrt();
            assert!((f - p[start][j]).abs() <= 4.0 * se, "row {start} col {j}: {f}");
        }
    }
}

#[test]
fn state_distribution_normalized_long_run() {
    let costs: BTreeMap<String, DistributionSpec> =
        ["a", "b", "c"].iter().map(|s| (s.to_string(), constant(1.0))).collect();
    let model = MarkovModel::new(
        names(&["a", "b", "c"]),
        vec![vec![0.9, 0.08, 0.02], vec![0.6, 0.3, 0.1], vec![0.3, 0.3, 0.4]],
        None,
        &costs,
        vec![0.2, 0.5, 0.3],
    )
    .unwrap();
    for t in [0, 1, 10, 100, 1000] {
        let d = model.state_distribution(t);
        assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-10, "t {t}");
    }
}

// Exact expected one-stage cost.
fn exact_stage_cost(initial: &[f64], p: &[Vec<f64>], cost: &[f64]) -> f64 {
    (0..3).map(|i| initial[i] * (0..3).map(|j| p[i][j] * cost[j]).sum::<f64>()).sum()
}

#[test]
fn moving_mass_to_costliest_state_never_lowers_cost() {
    let cost = [1.0, 5.0, 50.0];
    let initial = [0.6, 0.3, 0.1];
    let mut p = vec![vec![0.9, 0.08, 0.02], vec![0.6, 0.3, 0.1], vec![0.3, 0.3, 0.4]];
    let mut prev = exact_stage_cost(&initial, &p, &cost);
    for _ in 0..50 {
        p[0][0] -= 0.01;
        p[0][2] += 0.01;
        let next = exact_stage_cost(&initial, &p, &cost);
        assert!(next >= prev);
        prev = next;
    }
}

#[test]
fn ctmc_first_jump_mean() {
    let g = GeneratorModel::from_rates(names(&["up", "down"]), vec![vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
    let mut rng = RandomStream::new(13, 0);
    let total: f64 = (0..N).map(|_| g.simulate(0, 1e9, &mut rng)[0].duration).sum();
    let m = total / N as f64;
    assert!((m - 0.5).abs() <= 0.002, "{m}");
}

#[test]
fn ctmc_competing_risks_split() {
    let g = GeneratorModel::from_rates(
        names(&["a", "b", "c"]),
        vec![vec![0.0, 1.0, 3.0], vec![0.0; 3], vec![0.0; 3]],
    )
    .unwrap();
    let mut rng = RandomStream::new(14, 0);
    let to_b = (0..N).filter(|_| g.simulate(0, 1e9, &mut rng)[1].state == 1).count() as f64 / N as f64;
    assert!((to_b - 0.25).abs() <= 0.002, "{to_b}");
}

#[test]
fn shipped_config_mean_at_default_size() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/logistics.json");
    let pipeline = load_scenario(path).unwrap();
    let s = run_monte_carlo_with(&pipeline, &ScenarioMode::NonAi, &EngineOptions::default()).unwrap();
    let r = summarize(&s, pipeline.thresholds(), pipeline.alphas()).unwrap();
    // 4 SE at n = 1e5
    assert!((r.mean - 13.0802).abs() <= 4.0 * r.std_error, "{} +/- {}", r.mean, r.std_error);
}

#[test]
fn empty_run_errors_downstream() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/logistics.json");
    let pipeline = load_scenario(path).unwrap().with_overrides(None, Some(0));
    let s = run_monte_carlo_with(&pipeline, &ScenarioMode::NonAi, &EngineOptions::default()).unwrap();
    assert!(s.is_empty());
    assert!(empirical_var(&s, 0.95).is_err());
    assert!(summarize(&s, &[30.0], &[0.95]).is_err());
}

#[test]
fn standard_normal_var_via_quantile_oracle() {
    let d = DistributionSpec::normal(0.0, 1.0).unwrap();
    let mut rng = RandomStream::new(15, 0);
    let s = scenario_risk::risk::SampleSet::new(
        (0..N).map(|_| d.sample(&mut rng)).collect(),
        15,
        ScenarioMode::NonAi,
    );
    assert!((empirical_var(&s, 0.95).unwrap() - norm_quantile(0.95)).abs() <= 0.005);
}
