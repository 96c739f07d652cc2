//! Finite-population games under the equilibrium policy.
//!
//! Policies are decentralized, so each agent's trajectory depends only on
//! its own noise streams: agents are simulated independently (in parallel)
//! and the coupling term, the empirical mean, enters only the cost
//! bookkeeping. All reductions run in ascending agent order, so results are
//! bit-identical for any thread count.

mod agent;
pub mod metrics;
pub mod nash;
pub mod probe;

use rayon::prelude::*;

use crate::equilibrium::{mf_trajectory, EquilibriumSolution};
use crate::model::{sample_types, GameConfig};
use crate::rng::run_seed;
use crate::{Matrix, Result, Vector};

pub use agent::AgentPath;
use agent::{simulate_agent, PeerOutputs, SharedContext};
pub use metrics::{consensus_spread, epsilon_metric, estimation_error_trace, finite_cost, transmission_rate};
pub use nash::{default_deviation_family, nash_gap, GapReport, MemberEstimate};
pub use probe::{dual_effect_probe, dual_effect_probe_with, ProbeArm, ProbeOptions, ProbeReport};

/// Control law applied by the first agent; every other agent plays the
/// equilibrium policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolicySpec {
    /// `U = -Π·Y - Γ·g_{k+1}`.
    Equilibrium,
    /// `U = -θ·Π·Y - Γ·g_{k+1}`.
    ScaledGain(f64),
    /// `U = 0`.
    ZeroControl,
    /// Clairvoyant variant that sees every agent's decoder output and
    /// replaces `X̄*_{k+1}` by `L*` times the realized mean output.
    EmpiricalMeanTracking,
}

impl std::fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicySpec::Equilibrium => write!(f, "equilibrium"),
            PolicySpec::ScaledGain(t) => write!(f, "scaled_gain({t})"),
            PolicySpec::ZeroControl => write!(f, "zero_control"),
            PolicySpec::EmpiricalMeanTracking => write!(f, "empirical_mean_tracking"),
        }
    }
}

impl std::str::FromStr for PolicySpec {
    type Err = crate::Error;

    /// Parses the [`Display`](std::fmt::Display) form, e.g. `scaled_gain(1.5)`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "equilibrium" => Ok(PolicySpec::Equilibrium),
            "zero_control" => Ok(PolicySpec::ZeroControl),
            "empirical_mean_tracking" => Ok(PolicySpec::EmpiricalMeanTracking),
            other => other
                .strip_prefix("scaled_gain(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|t| t.trim().parse::<f64>().ok())
                .filter(|t| t.is_finite())
                .map(PolicySpec::ScaledGain)
                .ok_or_else(|| crate::Error::Invalid(format!("unknown policy {other:?}"))),
        }
    }
}

/// Full per-step record of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub state_dim: usize,
    pub input_dim: usize,
    pub horizon: usize,
    /// Cost weights `(Q, R)` per type.
    pub weights: Vec<(Matrix, Matrix)>,
    /// One path per agent, in agent order.
    pub agents: Vec<AgentPath>,
}

impl Trace {
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// State of agent `i` at step `k`.
    pub fn state(&self, i: usize, k: usize) -> &[f64] {
        let n = self.state_dim;
        &self.agents[i].x[k * n..(k + 1) * n]
    }

    /// `(1/N) Σ_j X_k^j`, row-major `T × n`.
    ///
    /// Accumulated as a running mean in agent order, which returns the
    /// common value exactly when all agents agree.
    pub fn empirical_mean(&self) -> Vec<f64> {
        let n = self.state_dim;
        let mut mean = vec![0.0; self.horizon * n];
        for (count, a) in self.agents.iter().enumerate() {
            let c = (count + 1) as f64;
            for (m, x) in mean.iter_mut().zip(&a.x) {
                *m += (x - *m) / c;
            }
        }
        mean
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    /// Finite-horizon cost averaged over agents.
    pub avg_cost_per_agent: f64,
    /// `(1/T) Σ_k ‖(1/N)Σ_j X_k^j - X̄*_k‖²` for this run.
    pub eps_tn: f64,
    /// Mean over agents of `‖ē_k‖²`, per step.
    pub est_err_trace: Vec<f64>,
    /// Fraction of (agent, step) pairs with a transmission.
    pub tx_rate: f64,
    /// Cross-agent standard deviation of the state, per step.
    pub consensus_spread: Vec<f64>,
}

impl RunMetrics {
    pub fn from_trace(trace: &Trace, mf: &[Vector]) -> Self {
        let mean = trace.empirical_mean();
        let avg_cost_per_agent = (0..trace.num_agents())
            .map(|i| metrics::finite_cost_with_mean(trace, i, &mean))
            .sum::<f64>()
            / trace.num_agents() as f64;
        Self {
            avg_cost_per_agent,
            eps_tn: metrics::epsilon_with_mean(trace, &mean, mf),
            est_err_trace: estimation_error_trace(trace),
            tx_rate: transmission_rate(trace),
            consensus_spread: consensus_spread(trace),
        }
    }
}

fn check(cfg: &GameConfig, sol: &EquilibriumSolution) -> Result<()> {
    sol.check_compatible(&cfg.distribution)
}

/// Simulates `N` agents over `T` steps. Agent 0 follows `policy`, the
/// others the equilibrium policy.
pub fn simulate(cfg: &GameConfig, sol: &EquilibriumSolution, seed: u64, policy: PolicySpec) -> Result<Trace> {
    check(cfg, sol)?;
    let ctx = SharedContext::new(cfg, sol);
    Ok(simulate_with(cfg, &ctx, seed, policy))
}

pub(crate) fn simulate_with(cfg: &GameConfig, ctx: &SharedContext<'_>, seed: u64, policy: PolicySpec) -> Trace {
    let n_agents = cfg.sim.agents;
    let (assignment, _) = sample_types(n_agents, &cfg.distribution, seed);
    let others: Vec<AgentPath> = (1..n_agents)
        .into_par_iter()
        .map(|i| simulate_agent(ctx, assignment[i], seed, i as u64, PolicySpec::Equilibrium, None))
        .collect();
    let peer_sum = (policy == PolicySpec::EmpiricalMeanTracking).then(|| sum_outputs(&others, ctx.horizon, cfg.state_dim()));
    let peers = peer_sum.as_ref().map(|y_sum| PeerOutputs {
        y_sum,
        agents: n_agents,
    });
    let first = simulate_agent(ctx, assignment[0], seed, 0, policy, peers.as_ref());
    let mut agents = Vec::with_capacity(n_agents);
    agents.push(first);
    agents.extend(others);
    Trace {
        state_dim: cfg.state_dim(),
        input_dim: cfg.input_dim(),
        horizon: ctx.horizon,
        weights: cfg
            .distribution
            .types()
            .iter()
            .map(|t| (t.q.clone(), t.r.clone()))
            .collect(),
        agents,
    }
}

pub(crate) fn sum_outputs(paths: &[AgentPath], horizon: usize, n: usize) -> Vec<f64> {
    let mut sum = vec![0.0; horizon * n];
    for p in paths {
        for (s, y) in sum.iter_mut().zip(&p.y) {
            *s += y;
        }
    }
    sum
}

/// One game: metrics plus, on request, the full trace.
pub fn run_game(
    cfg: &GameConfig,
    sol: &EquilibriumSolution,
    seed: u64,
    policy: PolicySpec,
    keep_trace: bool,
) -> Result<(RunMetrics, Option<Trace>)> {
    let trace = simulate(cfg, sol, seed, policy)?;
    let mf = mf_trajectory(sol, cfg.sim.horizon);
    let metrics = RunMetrics::from_trace(&trace, &mf);
    Ok((metrics, keep_trace.then_some(trace)))
}

/// One row of a batch summary.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub run_id: usize,
    pub agents: usize,
    pub horizon: usize,
    pub alpha: f64,
    pub seed: u64,
    pub metrics: RunMetrics,
}

/// `cfg.sim.runs` independent games with seeds `seed, seed+1, ...`.
pub fn run_batch(cfg: &GameConfig, sol: &EquilibriumSolution, policy: PolicySpec) -> Result<Vec<RunSummary>> {
    check(cfg, sol)?;
    let ctx = SharedContext::new(cfg, sol);
    let mf = mf_trajectory(sol, cfg.sim.horizon);
    Ok((0..cfg.sim.runs)
        .map(|run_id| {
            let seed = run_seed(cfg.sim.seed, run_id);
            let trace = simulate_with(cfg, &ctx, seed, policy);
            RunSummary {
                run_id,
                agents: cfg.sim.agents,
                horizon: cfg.sim.horizon,
                alpha: cfg.scheduler.alpha,
                seed,
                metrics: RunMetrics::from_trace(&trace, &mf),
            }
        })
        .collect())
}

/// Quartiles by linear interpolation between order statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

pub fn quartiles(values: &[f64]) -> Quartiles {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        if v.is_empty() {
            return f64::NAN;
        }
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Quartiles {
        q1: at(0.25),
        median: at(0.5),
        q3: at(0.75),
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_of_single_value_collapse() {
        let q = quartiles(&[3.5]);
        assert_eq!((q.q1, q.median, q.q3), (3.5, 3.5, 3.5));
    }

    #[test]
    fn quartiles_interpolate() {
        let q = quartiles(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((q.q1, q.median, q.q3), (2.0, 3.0, 4.0));
        let q = quartiles(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((q.q1, q.median, q.q3), (1.75, 2.5, 3.25));
    }

    #[test]
    fn policy_names_round_trip() {
        for p in [
            PolicySpec::Equilibrium,
            PolicySpec::ZeroControl,
            PolicySpec::EmpiricalMeanTracking,
            PolicySpec::ScaledGain(1.25),
        ] {
            assert_eq!(p.to_string().parse::<PolicySpec>().unwrap(), p);
        }
        assert!("scaled_gain(x)".parse::<PolicySpec>().is_err());
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_and_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    }
}
