//! Unilateral-deviation gap for the first agent over a finite policy family.
//!
//! The family is a small, fixed set of alternatives, so the reported gap is
//! a lower bound on the true best-response gain.

use rayon::prelude::*;

use crate::equilibrium::EquilibriumSolution;
use crate::model::{sample_types, GameConfig};
use crate::rng::run_seed;
use crate::sim::agent::{simulate_agent, AgentPath, PeerOutputs, SharedContext};
use crate::sim::metrics::agent_cost;
use crate::sim::{mean_and_stderr, sum_outputs, PolicySpec};
use crate::Result;

/// Gain scalings `θ ∈ {0.5, 0.75, 1, 1.25, 1.5}` plus the clairvoyant
/// empirical-mean tracker.
pub fn default_deviation_family() -> Vec<PolicySpec> {
    let mut fam: Vec<PolicySpec> = [0.5, 0.75, 1.0, 1.25, 1.5].into_iter().map(PolicySpec::ScaledGain).collect();
    fam.push(PolicySpec::EmpiricalMeanTracking);
    fam
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemberEstimate {
    pub policy: PolicySpec,
    pub mean_cost: f64,
    /// Mean over runs of `J(member) - J(equilibrium)`.
    pub mean_diff: f64,
    pub diff_stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    pub agents: usize,
    pub runs: usize,
    pub eq_cost: f64,
    pub eq_cost_stderr: f64,
    /// `max(0, J(equilibrium) - min over family)`.
    pub gap: f64,
    /// Standard error of the best member's paired difference.
    pub stderr: f64,
    /// Index into `members` of the cheapest member, if any.
    pub best: Option<usize>,
    pub members: Vec<MemberEstimate>,
}

/// Estimates the first agent's gain from deviating to each member of
/// `family` while all others play the equilibrium, over `runs` seeds
/// `seed, seed+1, ...`. Every member sees the same noise in a given run.
pub fn nash_gap(
    cfg: &GameConfig,
    sol: &EquilibriumSolution,
    family: &[PolicySpec],
    runs: usize,
    seed: u64,
) -> Result<GapReport> {
    sol.check_compatible(&cfg.distribution)?;
    let ctx = SharedContext::new(cfg, sol);
    let n_agents = cfg.sim.agents;
    let horizon = cfg.sim.horizon;
    let n = cfg.state_dim();
    let m = cfg.input_dim();

    let mut eq_costs = Vec::with_capacity(runs);
    let mut costs = vec![Vec::with_capacity(runs); family.len()];
    for r in 0..runs {
        let s = run_seed(seed, r);
        let (assignment, _) = sample_types(n_agents, &cfg.distribution, s);
        let others: Vec<AgentPath> = (1..n_agents)
            .into_par_iter()
            .map(|i| simulate_agent(&ctx, assignment[i], s, i as u64, PolicySpec::Equilibrium, None))
            .collect();
        let y_sum = sum_outputs(&others, horizon, n);
        let peers = PeerOutputs {
            y_sum: &y_sum,
            agents: n_agents,
        };
        let (q, r_w) = {
            let t = &cfg.distribution.types()[assignment[0]];
            (&t.q, &t.r)
        };
        let cost_of = |policy: PolicySpec| {
            let path = simulate_agent(&ctx, assignment[0], s, 0, policy, Some(&peers));
            // Same accumulation order as `Trace::empirical_mean`.
            let mut mean = path.x.clone();
            for (count, a) in others.iter().enumerate() {
                let c = (count + 2) as f64;
                for (mu, x) in mean.iter_mut().zip(&a.x) {
                    *mu += (x - *mu) / c;
                }
            }
            agent_cost(&path.x, &path.u, &mean, q, r_w, n, m, horizon)
        };
        eq_costs.push(cost_of(PolicySpec::Equilibrium));
        let member_costs: Vec<f64> = family.par_iter().map(|&p| cost_of(p)).collect();
        for (c, v) in costs.iter_mut().zip(member_costs) {
            c.push(v);
        }
    }

    let (eq_cost, eq_cost_stderr) = mean_and_stderr(&eq_costs);
    let members: Vec<MemberEstimate> = family
        .iter()
        .zip(&costs)
        .map(|(&policy, c)| {
            let diffs: Vec<f64> = c.iter().zip(&eq_costs).map(|(a, b)| a - b).collect();
            let (mean_diff, diff_stderr) = mean_and_stderr(&diffs);
            MemberEstimate {
                policy,
                mean_cost: mean_and_stderr(c).0,
                mean_diff,
                diff_stderr,
            }
        })
        .collect();
    let best = members
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.mean_diff.total_cmp(&b.1.mean_diff))
        .map(|(i, _)| i);
    let (gap, stderr) = match best {
        Some(i) => ((-members[i].mean_diff).max(0.0), members[i].diff_stderr),
        None => (0.0, 0.0),
    };
    Ok(GapReport {
        agents: n_agents,
        runs,
        eq_cost,
        eq_cost_stderr,
        gap,
        stderr,
        best,
        members,
    })
}
