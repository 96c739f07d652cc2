//! CSV writers. Floats are printed with 17 significant digits.

use std::fmt::Write;

use crate::config::fmt_f64;
use crate::sim::{Quartiles, RunMetrics, RunSummary, Trace};

/// `k,agent_id,gamma,x0..,y0..,u0..,err_sq`, ordered by step then agent.
pub fn trace_csv(trace: &Trace) -> String {
    let n = trace.state_dim;
    let m = trace.input_dim;
    let mut out = String::from("k,agent_id,gamma");
    for prefix in ["x", "y"] {
        for c in 0..n {
            write!(out, ",{prefix}{c}").unwrap();
        }
    }
    for c in 0..m {
        write!(out, ",u{c}").unwrap();
    }
    out.push_str(",err_sq\n");
    for k in 0..trace.horizon {
        for (i, a) in trace.agents.iter().enumerate() {
            write!(out, "{k},{i},{}", u8::from(a.gamma[k])).unwrap();
            for v in a.x[k * n..(k + 1) * n].iter().chain(&a.y[k * n..(k + 1) * n]).chain(&a.u[k * m..(k + 1) * m]) {
                write!(out, ",{}", fmt_f64(*v)).unwrap();
            }
            let err_sq: f64 = a.err[k * n..(k + 1) * n].iter().map(|e| e * e).sum();
            writeln!(out, ",{}", fmt_f64(err_sq)).unwrap();
        }
    }
    out
}

pub const SUMMARY_HEADER: &str = "run_id,N,T,alpha,seed,avg_cost,eps_TN,tx_rate";

pub fn summary_csv(rows: &[RunSummary]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.run_id,
            r.agents,
            r.horizon,
            fmt_f64(r.alpha),
            r.seed,
            fmt_f64(r.metrics.avg_cost_per_agent),
            fmt_f64(r.metrics.eps_tn),
            fmt_f64(r.metrics.tx_rate)
        )
        .unwrap();
    }
    out
}

/// One box-plot row per threshold: quartiles of the per-run average cost.
pub fn quartiles_csv(rows: &[(f64, usize, Quartiles)]) -> String {
    let mut out = String::from("alpha,runs,q1,median,q3\n");
    for (alpha, runs, q) in rows {
        writeln!(out, "{},{runs},{},{},{}", fmt_f64(*alpha), fmt_f64(q.q1), fmt_f64(q.median), fmt_f64(q.q3)).unwrap();
    }
    out
}

/// Per-step series of one run: `k,est_err,consensus_spread`.
pub fn timeseries_csv(metrics: &RunMetrics) -> String {
    let mut out = String::from("k,est_err,consensus_spread\n");
    for (k, (e, s)) in metrics.est_err_trace.iter().zip(&metrics.consensus_spread).enumerate() {
        writeln!(out, "{k},{},{}", fmt_f64(*e), fmt_f64(*s)).unwrap();
    }
    out
}
