//! Per-run statistics computed from a [`Trace`].

use crate::sim::Trace;
use crate::Vector;

/// `(1/T) Σ_k ‖(1/N) Σ_j X_k^j - X̄*_k‖²` for one run.
pub fn epsilon_metric(trace: &Trace, mf: &[Vector]) -> f64 {
    epsilon_with_mean(trace, &trace.empirical_mean(), mf)
}

pub(crate) fn epsilon_with_mean(trace: &Trace, mean: &[f64], mf: &[Vector]) -> f64 {
    let n = trace.state_dim;
    let total: f64 = (0..trace.horizon)
        .map(|k| {
            (0..n)
                .map(|c| {
                    let d = mean[k * n + c] - mf[k][c];
                    d * d
                })
                .sum::<f64>()
        })
        .sum();
    total / trace.horizon as f64
}

/// `(1/T) Σ_k [‖X_k^i - (1/N)Σ_j X_k^j‖²_Q + ‖U_k^i‖²_R]`.
pub fn finite_cost(trace: &Trace, i: usize) -> f64 {
    finite_cost_with_mean(trace, i, &trace.empirical_mean())
}

pub(crate) fn finite_cost_with_mean(trace: &Trace, i: usize, mean: &[f64]) -> f64 {
    let path = &trace.agents[i];
    let (q, r) = &trace.weights[path.type_index];
    agent_cost(&path.x, &path.u, mean, q, r, trace.state_dim, trace.input_dim, trace.horizon)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn agent_cost(
    x: &[f64],
    u: &[f64],
    mean: &[f64],
    q: &crate::Matrix,
    r: &crate::Matrix,
    n: usize,
    m: usize,
    horizon: usize,
) -> f64 {
    let mut dev = vec![0.0; n];
    let mut total = 0.0;
    for k in 0..horizon {
        for c in 0..n {
            dev[c] = x[k * n + c] - mean[k * n + c];
        }
        total += quad_form(q, &dev) + quad_form(r, &u[k * m..(k + 1) * m]);
    }
    total / horizon as f64
}

fn quad_form(w: &crate::Matrix, v: &[f64]) -> f64 {
    let d = v.len();
    let mut acc = 0.0;
    for i in 0..d {
        let mut row = 0.0;
        for j in 0..d {
            row += w[(i, j)] * v[j];
        }
        acc += v[i] * row;
    }
    acc
}

/// Per step, the norm of the cross-agent (population) standard deviation
/// vector of the states.
pub fn consensus_spread(trace: &Trace) -> Vec<f64> {
    let n = trace.state_dim;
    let mut mean = vec![0.0; trace.horizon * n];
    let mut m2 = vec![0.0; trace.horizon * n];
    for (count, a) in trace.agents.iter().enumerate() {
        let c = (count + 1) as f64;
        for ((mu, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(&a.x) {
            let delta = x - *mu;
            *mu += delta / c;
            *s += delta * (x - *mu);
        }
    }
    let agents = trace.num_agents() as f64;
    (0..trace.horizon)
        .map(|k| (m2[k * n..(k + 1) * n].iter().sum::<f64>() / agents).sqrt())
        .collect()
}

/// Mean over agents of `‖ē_k‖²`, per step.
pub fn estimation_error_trace(trace: &Trace) -> Vec<f64> {
    let n = trace.state_dim;
    let mut out = vec![0.0; trace.horizon];
    for a in &trace.agents {
        for (k, o) in out.iter_mut().enumerate() {
            *o += a.err[k * n..(k + 1) * n].iter().map(|e| e * e).sum::<f64>();
        }
    }
    let agents = trace.num_agents() as f64;
    out.iter_mut().for_each(|o| *o /= agents);
    out
}

/// Fraction of (agent, step) pairs that transmitted.
pub fn transmission_rate(trace: &Trace) -> f64 {
    let tx: usize = trace.agents.iter().map(|a| a.gamma.iter().filter(|&&g| g).count()).sum();
    tx as f64 / (trace.num_agents() * trace.horizon) as f64
}
