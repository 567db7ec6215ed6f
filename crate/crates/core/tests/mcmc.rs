use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rescaviar::likelihood::log_prior;
use rescaviar::mcmc::{self, export_diagnostics, sample_target, Chain, McmcConfig};
use rescaviar::simulate::{simulate_market, CovariateConfig};
use rescaviar::{InitialState, MarketSeries, ModelSpec, ParamVector, Variant};
use statrs::distribution::{ContinuousCDF, Normal};

fn short_series(n: usize, seed: u64) -> MarketSeries {
    let spec = ModelSpec::new(Variant::ResCaviarOc, 0.05).unwrap();
    let truth = ParamVector::new(vec![-0.5, 0.4, -1.2, 0.3, -1.0], [0.3, 0.4, 0.2]);
    let init = InitialState::new(-2.0, -2.6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_market(&spec, &truth, &init, n, &CovariateConfig::default(), &mut rng)
        .unwrap()
        .series
}

#[test]
fn bookkeeping_short_run() {
    let s = short_series(30, 1);
    let spec = ModelSpec::new(Variant::ResCaviarOc, 0.05).unwrap();
    let init = InitialState::from_returns(s.r(), 0.05).unwrap();
    let cfg = McmcConfig { n_iter: 10, burn_in: 5, thin: 1, ..McmcConfig::default() };
    let chain = mcmc::sample(&spec, &s, &init, 1..30, None, &cfg).unwrap();
    assert_eq!(chain.len(), 5);
    assert_eq!(chain.iterations, vec![6, 7, 8, 9, 10]);
    for d in &chain.draws {
        let p = ParamVector::from_flat(Variant::ResCaviarOc, d).unwrap();
        assert!(p.satisfies_constraints(Variant::ResCaviarOc));
    }
    for a in &chain.acceptance {
        assert!((0.0..=1.0).contains(&a.rw) && (0.0..=1.0).contains(&a.independent));
    }
}

#[test]
fn thinning_counts_after_burn_in() {
    let s = short_series(60, 2);
    let spec = ModelSpec::new(Variant::ResCaviar, 0.05).unwrap();
    let init = InitialState::from_returns(s.r(), 0.05).unwrap();
    let cfg = McmcConfig { n_iter: 100, burn_in: 40, thin: 4, ..McmcConfig::default() };
    let chain = mcmc::sample(&spec, &s, &init, 1..60, None, &cfg).unwrap();
    assert_eq!(chain.len(), 15);
    assert_eq!(chain.iterations[0], 44);
    assert_eq!(*chain.iterations.last().unwrap(), 100);
}

#[test]
fn infeasible_start_is_an_error() {
    let target = |_: &[f64]| f64::NEG_INFINITY;
    let cfg = McmcConfig { n_iter: 10, burn_in: 5, ..McmcConfig::default() };
    let r = sample_target(&target, vec!["x".into()], vec![0..1], &[0.0], &cfg);
    assert!(r.is_err());
}

#[test]
fn rejected_epochs_are_reported() {
    // support is a single point in practice: every proposal is rejected
    let target = |x: &[f64]| if x[0] == 0.5 { 0.0 } else { f64::NEG_INFINITY };
    let cfg = McmcConfig { n_iter: 500, burn_in: 400, thin: 1, ..McmcConfig::default() };
    let chain = sample_target(&target, vec!["x".into()], vec![0..1], &[0.5], &cfg).unwrap();
    assert!(!chain.warnings.is_empty());
    assert!(chain.warnings[0].contains("no proposals accepted"));
}

/// With the likelihood switched off the random-walk acceptance rate is the
/// probability that a proposal lands in the constraint set.
#[test]
fn prior_only_acceptance_matches_constraint_probability() {
    let v = Variant::ResCaviarOc;
    let spec = ModelSpec::new(v, 0.025).unwrap();
    let target = |x: &[f64]| log_prior(&spec, &ParamVector::from_flat(v, x).unwrap());
    let s = 0.05;
    let cfg = McmcConfig {
        n_iter: 20_001,
        burn_in: 20_000,
        thin: 1,
        rw_initial_scale: s,
        adapt_up: 1.0,
        adapt_down: 1.0,
        empirical_cov_after: 20_000,
        keep_burn_in: true,
        seed: 11,
        ..McmcConfig::default()
    };
    // start near the boundaries so rejections are frequent
    let start = [0.0, 0.97, -0.02, 0.0, -0.03, 0.02, 0.01, 0.98];
    let chain = sample_target(&target, v.param_names(), vec![0..5, 5..8], &start, &cfg).unwrap();
    let trace = chain.burn_in_trace.as_ref().unwrap();
    let phi = Normal::new(0.0, 1.0).unwrap();
    let cdf = |x: f64| phi.cdf(x);
    let mut states = vec![start.to_vec()];
    states.extend(trace[..trace.len() - 1].iter().cloned());
    let beta_p: Vec<f64> = states
        .iter()
        .map(|x| (cdf((1.0 - x[1]) / s) - cdf((-1.0 - x[1]) / s)) * cdf(-x[2] / s) * cdf(-x[4] / s))
        .collect();
    let gamma_p: Vec<f64> = states
        .iter()
        .map(|x| cdf(x[5] / s) * cdf(x[6] / s) * (cdf((1.0 - x[7]) / s) - cdf(-x[7] / s)))
        .collect();
    let m = states.len() as f64;
    for (p, acc) in [(beta_p, chain.acceptance[0].rw), (gamma_p, chain.acceptance[1].rw)] {
        let expected = p.iter().sum::<f64>() / m;
        let se = p.iter().map(|q| q * (1.0 - q)).sum::<f64>().sqrt() / m;
        assert!(
            (acc - expected).abs() < 3.0 * se,
            "acceptance {acc} vs constraint probability {expected} (se {se})"
        );
    }
}

fn batch_mean_se(x: &[f64], batches: usize) -> (f64, f64) {
    let b = x.len() / batches;
    let means: Vec<f64> = (0..batches).map(|i| x[i * b..(i + 1) * b].iter().sum::<f64>() / b as f64).collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// Product of a half-normal and an upper-truncated normal: both kernels
/// together must leave it invariant.
#[test]
fn truncated_gaussian_moments() {
    let target = |x: &[f64]| {
        if x[0] <= 0.0 || x[1] >= 1.5 {
            return f64::NEG_INFINITY;
        }
        -0.5 * x[0] * x[0] - 0.5 * ((x[1] - 1.0) / 0.5).powi(2)
    };
    let cfg = McmcConfig { n_iter: 80_000, burn_in: 10_000, thin: 1, seed: 3, ..McmcConfig::default() };
    let chain = sample_target(&target, vec!["a".into(), "b".into()], vec![0..1, 1..2], &[1.0, 1.0], &cfg).unwrap();
    let phi = Normal::new(0.0, 1.0).unwrap();
    let pdf1 = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let m1 = (2.0 / std::f64::consts::PI).sqrt();
    let m2 = 1.0 - 0.5 * pdf1 / phi.cdf(1.0);
    // E[x^2] of the upper-truncated normal: mu^2 + sigma^2 (1 - b phi(b)/Phi(b)) - 2 mu sigma phi(b)/Phi(b) + ...
    let lambda = pdf1 / phi.cdf(1.0);
    let var2 = 0.25 * (1.0 - lambda - lambda * lambda);
    let checks = [
        (chain.column(0), m1),
        (chain.column(0).iter().map(|x| x * x).collect::<Vec<_>>(), 1.0),
        (chain.column(1), m2),
        (chain.column(1).iter().map(|x| x * x).collect::<Vec<_>>(), var2 + m2 * m2),
    ];
    for (xs, truth) in checks {
        let (mean, se) = batch_mean_se(&xs, 50);
        assert!((mean - truth).abs() < 3.0 * se, "{mean} vs {truth} (se {se})");
    }
    assert!(chain.acceptance.iter().all(|a| a.independent > 0.5));
}

#[test]
fn chain_checkpoint_roundtrip() {
    let s = short_series(80, 3);
    let spec = ModelSpec::new(Variant::EsCaviar, 0.05).unwrap();
    let init = InitialState::from_returns(s.r(), 0.05).unwrap();
    let cfg = McmcConfig { n_iter: 200, burn_in: 100, thin: 2, ..McmcConfig::default() };
    let chain = mcmc::sample(&spec, &s, &init, 1..80, None, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.json");
    chain.save_json(&path).unwrap();
    assert_eq!(Chain::load_json(&path).unwrap(), chain);
}

fn toy_chain(names: &[&str], draws: Vec<Vec<f64>>, first_iter: usize, step: usize) -> Chain {
    Chain {
        names: names.iter().map(|s| s.to_string()).collect(),
        blocks: vec![0..names.len()],
        iterations: (0..draws.len()).map(|i| first_iter + i * step).collect(),
        draws,
        acceptance: vec![],
        warnings: vec![],
        burn_in_trace: None,
    }
}

fn export(chain: &Chain, lag: usize) -> (String, String) {
    let mut t = Vec::new();
    let mut a = Vec::new();
    export_diagnostics(chain, lag, &mut t, &mut a).unwrap();
    (String::from_utf8(t).unwrap(), String::from_utf8(a).unwrap())
}

#[test]
fn diagnostics_golden_two_parameters() {
    let c = toy_chain(&["beta1", "gamma1"], vec![vec![1.0, 0.5], vec![2.0, 0.25], vec![3.0, 0.5], vec![4.0, 0.25]], 4, 4);
    let (trace, acf) = export(&c, 1);
    assert_eq!(
        trace,
        "iteration,parameter,value\n4,beta1,1\n8,beta1,2\n12,beta1,3\n16,beta1,4\n4,gamma1,0.5\n8,gamma1,0.25\n12,gamma1,0.5\n16,gamma1,0.25\n"
    );
    assert_eq!(acf, "lag,parameter,acf\n0,beta1,1.000000\n1,beta1,0.250000\n0,gamma1,1.000000\n1,gamma1,-0.750000\n");
}

#[test]
fn diagnostics_golden_constant_parameter_has_no_acf() {
    let c = toy_chain(&["beta1", "beta2"], vec![vec![0.1, -1.0], vec![0.1, 1.0], vec![0.1, -1.0]], 1, 1);
    let (trace, acf) = export(&c, 2);
    assert_eq!(trace, "iteration,parameter,value\n1,beta1,0.1\n2,beta1,0.1\n3,beta1,0.1\n1,beta2,-1\n2,beta2,1\n3,beta2,-1\n");
    assert_eq!(acf, "lag,parameter,acf\n0,beta2,1.000000\n1,beta2,-0.666667\n2,beta2,0.166667\n");
}

#[test]
fn diagnostics_golden_lag_capped_by_length() {
    let c = toy_chain(&["x"], vec![vec![0.0], vec![1.0]], 10, 5);
    let (trace, acf) = export(&c, 40);
    assert_eq!(trace, "iteration,parameter,value\n10,x,0\n15,x,1\n");
    assert_eq!(acf, "lag,parameter,acf\n0,x,1.000000\n1,x,-0.500000\n");
}

#[test]
fn export_to_directory() {
    let c = toy_chain(&["x"], vec![vec![0.0], vec![1.0], vec![0.5]], 1, 1);
    let dir = tempfile::tempdir().unwrap();
    mcmc::export_diagnostics_to_dir(&c, 1, dir.path()).unwrap();
    assert!(dir.path().join("trace.csv").exists());
    assert!(dir.path().join("acf.csv").exists());
}

#[test]
fn random_start_points_reach_same_posterior_region() {
    let s = short_series(400, 4);
    let spec = ModelSpec::new(Variant::ResCaviar, 0.05).unwrap();
    let init = InitialState::from_returns(s.r(), 0.05).unwrap();
    let cfg = McmcConfig { n_iter: 6000, burn_in: 3000, thin: 2, ..McmcConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut means = Vec::new();
    for k in 0..2 {
        let start = ParamVector::new(
            vec![rng.random_range(-0.5..0.0), rng.random_range(0.0..0.5), rng.random_range(-0.5..-0.05)],
            [0.1, 0.1, 0.1],
        );
        let c = mcmc::sample(&spec, &s, &init, 1..400, Some(&start), &McmcConfig { seed: k, ..cfg.clone() }).unwrap();
        means.push(mcmc::summarize_chain(&c).unwrap());
    }
    for (a, b) in means[0].params.iter().zip(&means[1].params) {
        assert!((a.mean - b.mean).abs() < 3.0 * (a.std + b.std), "{} {} {}", a.name, a.mean, b.mean);
    }
}
