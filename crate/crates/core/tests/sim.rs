use approx::assert_abs_diff_eq;
use mfgsim_core::config::load_config_file;
use mfgsim_core::equilibrium::{solve_equilibrium, EquilibriumSolution};
use mfgsim_core::model::GameConfig;
use mfgsim_core::report::{summary_csv, trace_csv};
use mfgsim_core::sim::{
    default_deviation_family, finite_cost, mean_and_stderr, nash_gap, run_batch, run_game, simulate, PolicySpec,
};
use mfgsim_core::Matrix;

fn fixture(name: &str) -> GameConfig {
    load_config_file(format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn solved(cfg: &GameConfig) -> EquilibriumSolution {
    solve_equilibrium(&cfg.distribution, &cfg.solver, false).unwrap()
}

fn noiseless(agents: usize, alpha: f64) -> GameConfig {
    let mut cfg = GameConfig::model_a();
    cfg.noise.sigma_x = Matrix::zeros(1, 1);
    cfg.noise.sigma_w = Matrix::zeros(1, 1);
    cfg.noise.sigma_v = Matrix::zeros(1, 1);
    cfg.options.allow_noiseless_channel = true;
    cfg.scheduler.alpha = alpha;
    cfg.sim.agents = agents;
    cfg.validate().unwrap();
    cfg
}

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f)
}

#[test]
fn noiseless_game_sits_on_the_mean_field() {
    for alpha in [0.0, 1e12] {
        let cfg = noiseless(10, alpha);
        let sol = solved(&cfg);
        let (m, trace) = run_game(&cfg, &sol, 9, PolicySpec::Equilibrium, true).unwrap();
        assert_eq!(m.avg_cost_per_agent, 0.0);
        assert_eq!(m.eps_tn, 0.0);
        assert!(m.consensus_spread.iter().all(|&s| s == 0.0));
        let trace = trace.unwrap();
        assert!(trace.agents.iter().all(|a| a.u.iter().all(|&u| u == 0.0)));
    }
}

#[test]
fn noiseless_nash_gap_is_zero() {
    let cfg = noiseless(10, 0.0);
    let sol = solved(&cfg);
    let rep = nash_gap(&cfg, &sol, &default_deviation_family(), 3, 1).unwrap();
    assert_eq!(rep.eq_cost, 0.0);
    assert_eq!(rep.gap, 0.0);
    assert!(rep.members.iter().all(|m| m.mean_diff >= 0.0));
}

#[test]
fn identity_family_has_zero_gap() {
    let cfg = GameConfig::model_a();
    let sol = solved(&cfg);
    let rep = nash_gap(&cfg, &sol, &[PolicySpec::Equilibrium], 4, 1).unwrap();
    assert_eq!(rep.gap, 0.0);
    assert_eq!(rep.stderr, 0.0);
}

#[test]
fn average_cost_is_mean_of_agent_costs() {
    let cfg = fixture("two_type.json");
    let sol = solved(&cfg);
    let (m, trace) = run_game(&cfg, &sol, 4, PolicySpec::Equilibrium, true).unwrap();
    let trace = trace.unwrap();
    let mean = (0..trace.num_agents()).map(|i| finite_cost(&trace, i)).sum::<f64>() / trace.num_agents() as f64;
    assert_abs_diff_eq!(m.avg_cost_per_agent, mean, epsilon = 1e-12);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut cfg = fixture("two_type.json");
    cfg.sim.agents = 64;
    let sol = solved(&cfg);
    let run = || {
        let rows = run_batch(&cfg, &sol, PolicySpec::Equilibrium).unwrap();
        let trace = simulate(&cfg, &sol, 3, PolicySpec::EmpiricalMeanTracking).unwrap();
        (summary_csv(&rows), trace_csv(&trace))
    };
    let one = with_threads(1, run);
    let eight = with_threads(8, run);
    assert_eq!(one, eight);
}

#[test]
fn initial_spread_matches_prior_std() {
    let mut cfg = GameConfig::model_a();
    cfg.sim.agents = 10_000;
    cfg.sim.horizon = 1;
    let sol = solved(&cfg);
    let (m, _) = run_game(&cfg, &sol, 2, PolicySpec::Equilibrium, false).unwrap();
    assert!((m.consensus_spread[0] - 0.5).abs() <= 0.015, "{}", m.consensus_spread[0]);
}

#[test]
fn spread_settles_below_its_initial_value() {
    // α = 0: recorded from a 2000-agent reference run. α = 2: no transmissions
    // after k = 0, so the spread is that of `e' = Ae + W`, √(Σ_w/(1 − A²)).
    let cases = [(0.0, 0.1143), (2.0, (0.01f64 / 0.75).sqrt())];
    for (alpha, stationary) in cases {
        let mut cfg = GameConfig::model_a();
        cfg.sim.agents = 2000;
        cfg.scheduler.alpha = alpha;
        let sol = solved(&cfg);
        let (m, _) = run_game(&cfg, &sol, 8, PolicySpec::Equilibrium, false).unwrap();
        let s = &m.consensus_spread;
        let tail = s[250..].iter().sum::<f64>() / (s.len() - 250) as f64;
        assert!(s[250..].iter().all(|&v| v < s[0]));
        assert!((tail - stationary).abs() <= 0.1 * stationary, "alpha {alpha}: {tail}");
    }
}

#[test]
fn transmission_rate_falls_with_threshold() {
    let mut cfg = GameConfig::model_a();
    cfg.sim.runs = 5;
    let sol = solved(&cfg);
    let mut rates = Vec::new();
    for alpha in [0.0, 2.0, 4.0, 6.0] {
        cfg.scheduler.alpha = alpha;
        let rows = run_batch(&cfg, &sol, PolicySpec::Equilibrium).unwrap();
        let tx: Vec<f64> = rows.iter().map(|r| r.metrics.tx_rate).collect();
        rates.push(mean_and_stderr(&tx).0);
    }
    assert!(rates.windows(2).all(|w| w[1] <= w[0]), "{rates:?}");
    assert!(rates[3] < rates[0]);
    assert_eq!(rates[0], 1.0);
}

#[test]
fn population_error_shrinks_like_one_over_n() {
    let mut cfg = GameConfig::model_a();
    cfg.sim.runs = 10;
    cfg.sim.horizon = 200;
    let sol = solved(&cfg);
    let mut scaled = Vec::new();
    for n in [10, 100, 1000] {
        cfg.sim.agents = n;
        let eps: Vec<f64> = run_batch(&cfg, &sol, PolicySpec::Equilibrium)
            .unwrap()
            .iter()
            .map(|r| r.metrics.eps_tn)
            .collect();
        scaled.push(mean_and_stderr(&eps).0 * n as f64);
    }
    let c = (scaled.iter().map(|v| v.ln()).sum::<f64>() / 3.0).exp();
    assert!(scaled.iter().all(|v| v / c <= 3.0 && c / v <= 3.0), "{scaled:?}");
}
